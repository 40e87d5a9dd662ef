"""Feature-extraction client: decodes media clips, runs visual/audio/text
encoders, and writes feature archives in the GZSL engine's on-disk
format."""

from .audio import center_fix, log_mel, process, resample
from .encoders import EncoderSet, build_encoders
from .errors import EncoderError, ExtractorError, ManifestError, MediaError
from .extract import (ExtractionSpec, SampleSpec, build_archive,
                      build_prompt_ensemble_embedding, extract_audio,
                      extract_visual, middle_frame)
from .media import MediaClip, load_clip
from .prompts import PromptEnsemble, get_ensemble

__version__ = "0.1.0"

__all__ = [
    "EncoderError", "EncoderSet", "ExtractionSpec", "ExtractorError",
    "ManifestError", "MediaClip", "MediaError", "PromptEnsemble",
    "SampleSpec", "build_archive", "build_encoders",
    "build_prompt_ensemble_embedding", "center_fix", "extract_audio",
    "extract_visual", "get_ensemble", "load_clip", "log_mel",
    "middle_frame", "process", "resample",
]
