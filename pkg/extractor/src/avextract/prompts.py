"""Prompt-template ensembles for zero-shot text encoding.

Action-recognition datasets (UCF, ActivityNet) share one template set per
encoder; the general audio-video dataset (VGGSound) uses shorter generic
templates. Every template carries exactly one class-name slot.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ManifestError

CLIP_ACTION_TEMPLATES = [
    'a photo of a person {}.',
    'a video of a person {}.',
    'a example of a person {}.',
    'a demonstration of a person {}.',
    'a photo of the person {}.',
    'a video of the person {}.',
    'a example of the person {}.',
    'a demonstration of the person {}.',
    'a photo of a person using {}.',
    'a video of a person using {}.',
    'a example of a person using {}.',
    'a demonstration of a person using {}.',
    'a photo of the person using {}.',
    'a video of the person using {}.',
    'a example of the person using {}.',
    'a demonstration of the person using {}.',
    'a photo of a person doing {}.',
    'a video of a person doing {}.',
    'a example of a person doing {}.',
    'a demonstration of a person doing {}.',
    'a photo of the person doing {}.',
    'a video of the person doing {}.',
    'a example of the person doing {}.',
    'a demonstration of the person doing {}.',
    'a photo of a person during {}.',
    'a video of a person during {}.',
    'a example of a person during {}.',
    'a demonstration of a person during {}.',
    'a photo of the person during {}.',
    'a video of the person during {}.',
    'a example of the person during {}.',
    'a demonstration of the person during {}.',
    'a photo of a person performing {}.',
    'a video of a person performing {}.',
    'a example of a person performing {}.',
    'a demonstration of a person performing {}.',
    'a photo of the person performing {}.',
    'a video of the person performing {}.',
    'a example of the person performing {}.',
    'a demonstration of the person performing {}.',
    'a photo of a person practicing {}.',
    'a video of a person practicing {}.',
    'a example of a person practicing {}.',
    'a demonstration of a person practicing {}.',
    'a photo of the person practicing {}.',
    'a video of the person practicing {}.',
    'a example of the person practicing {}.',
    'a demonstration of the person practicing {}.',
]

CLIP_VGGSOUND_TEMPLATES = [
    'a photo of {}.',
    'a video of {}.',
    'a example of {}.',
    'a demonstration of {}.',
    'a photo of the person {}.',
    'a video of the {}.',
    'a example of the {}.',
    'a demonstration of the {}.',
]

CLAP_ACTION_TEMPLATES = [
    'a person {} can be heard.',
    'a example of a person {} can be heard.',
    'a demonstration of a person {} can be heard.',
    'the person {} can be heard.',
    'a example of the person {} can be heard.',
    'a demonstration of the person {} can be heard.',
    'a person using {} can be heard.',
    'a example of a person using {} can be heard.',
    'a demonstration of a person using {} can be heard.',
    'a example of the person using {} can be heard.',
    'a demonstration of the person using {} can be heard.',
    'a person doing {} can be heard.',
    'a example of a person doing {} can be heard.',
    'a demonstration of a person doing {} can be heard.',
    'a example of the person doing {} can be heard.',
    'a demonstration of the person doing {} can be heard.',
    'a example of a person during {} can be heard.',
    'a demonstration of a person during {} can be heard.',
    'a example of the person during {} can be heard.',
    'a demonstration of the person during {} can be heard.',
    'a person performing {} can be heard.',
    'a example of a person performing {} can be heard.',
    'a demonstration of a person performing {} can be heard.',
    'a example of the person performing {} can be heard.',
    'a demonstration of the person performing {} can be heard.',
    'a person practicing {} can be heard.',
    'a example of a person practicing {} can be heard.',
    'a demonstration of a person practicing {} can be heard.',
    'a example of the person practicing {} can be heard.',
    'a demonstration of the person practicing {} can be heard.',
]

CLAP_VGGSOUND_TEMPLATES = [
    'a {} can be heard.',
    'a example of a {} can be heard.',
    'a demonstration of a {} can be heard.',
    'the {} can be heard.',
    'a example of the {} can be heard.',
    'a demonstration of the {} can be heard.',
    '{} can be heard.',
    'a example of {} can be heard.',
    'a demonstration of {} can be heard.',
]


@dataclass(frozen=True)
class PromptEnsemble:
    dataset: str  # ucf | activitynet | vggsound
    encoder: str  # clip | clap
    templates: tuple

    def __post_init__(self):
        for t in self.templates:
            if t.count("{}") != 1:
                raise ManifestError(
                    f"template must contain exactly one class slot: {t!r}")

    def prompts(self, class_name: str) -> list:
        return [t.format(class_name) for t in self.templates]


_REGISTRY = {
    ("ucf", "clip"): CLIP_ACTION_TEMPLATES,
    ("activitynet", "clip"): CLIP_ACTION_TEMPLATES,
    ("vggsound", "clip"): CLIP_VGGSOUND_TEMPLATES,
    ("ucf", "clap"): CLAP_ACTION_TEMPLATES,
    ("activitynet", "clap"): CLAP_ACTION_TEMPLATES,
    ("vggsound", "clap"): CLAP_VGGSOUND_TEMPLATES,
}


def get_ensemble(dataset: str, encoder: str) -> PromptEnsemble:
    key = (dataset.lower(), encoder.lower())
    if key not in _REGISTRY:
        known = sorted({d for d, _ in _REGISTRY})
        raise ManifestError(
            f"no prompt ensemble for dataset={dataset!r} encoder={encoder!r}"
            f" (datasets: {known}, encoders: ['clip', 'clap'])")
    return PromptEnsemble(dataset=key[0], encoder=key[1],
                          templates=tuple(_REGISTRY[key]))
