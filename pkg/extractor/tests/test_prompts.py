import pytest

from avextract.errors import ManifestError
from avextract.prompts import PromptEnsemble, get_ensemble


@pytest.mark.parametrize("dataset,encoder,count", [
    ("ucf", "clip", 48),
    ("activitynet", "clip", 48),
    ("vggsound", "clip", 8),
    ("ucf", "clap", 30),
    ("activitynet", "clap", 30),
    ("vggsound", "clap", 9),
])
def test_template_counts(dataset, encoder, count):
    assert len(get_ensemble(dataset, encoder).templates) == count


def test_every_template_has_one_slot():
    for dataset in ("ucf", "activitynet", "vggsound"):
        for encoder in ("clip", "clap"):
            for t in get_ensemble(dataset, encoder).templates:
                assert t.count("{}") == 1


def test_templates_are_unique_per_ensemble():
    for dataset in ("ucf", "vggsound"):
        for encoder in ("clip", "clap"):
            templates = get_ensemble(dataset, encoder).templates
            assert len(set(templates)) == len(templates)


def test_prompt_filling():
    ens = get_ensemble("vggsound", "clap")
    prompts = ens.prompts("church bells")
    assert len(prompts) == 9
    assert "a church bells can be heard." in prompts


def test_unknown_registry_key():
    with pytest.raises(ManifestError):
        get_ensemble("kinetics", "clip")


def test_bad_template_rejected():
    with pytest.raises(ManifestError):
        PromptEnsemble("x", "clip", ("no slot here",))
    with pytest.raises(ManifestError):
        PromptEnsemble("x", "clip", ("two {} slots {}",))
