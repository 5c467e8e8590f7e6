"""Python bindings for the cpfl localization library."""

try:
    from . import _cpfl
except ImportError:  # in-tree build: the extension sits next to the package
    import _cpfl


PipelineParams = _cpfl.PipelineParams
SceneConfig = _cpfl.SceneConfig
Scene = _cpfl.Scene
Model = _cpfl.Model
synthesize = _cpfl.synthesize
load_model = _cpfl.load_model
localize = _cpfl.localize
evaluate = _cpfl.evaluate
gaussian_weight = _cpfl.gaussian_weight
bilateral_ratio_test = _cpfl.bilateral_ratio_test

__all__ = [
    "PipelineParams",
    "SceneConfig",
    "Scene",
    "Model",
    "synthesize",
    "load_model",
    "localize",
    "evaluate",
    "gaussian_weight",
    "bilateral_ratio_test",
]
