"""Style-smoothed prediction with abstention for domain-shifted inputs.

The public estimators follow the scikit-learn conventions:

- :class:`AdaINStylizer` learns an encoder/decoder that restyles images.
- :class:`ToyClassifier` and :class:`NSSClassifier` are the small CNN base
  classifiers trained with plain ERM or with the style-smoothing losses.
- :class:`StyleSmoothedClassifier` wraps any base classifier, votes over
  random restylings of each input and abstains on low agreement.
- :class:`ConfidenceAbstainer` is the max-softmax baseline.
"""

from .datagen import CorruptionSpec, Dataset, DomainSpec, Suite, corrupt, generate_domain, standard_suite
from .errors import (
    CapabilityError,
    CheckpointError,
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    InputError,
    StyleSmoothError,
)
from .evaluation import (
    RiskCoverageCurve,
    ScoredPrediction,
    abstained_accuracy,
    build_curve,
    compare_methods,
    styles_sweep,
)
from .models import LabelOnlyClassifier, ToyClassifier
from .nss import NSSClassifier, NssConfig
from .smoothing import (
    ABSTAIN,
    ConfidenceAbstainer,
    SmoothingConfig,
    StyleBank,
    StyleSmoothedClassifier,
    Verdict,
    confidence_abstain,
    consensus_profile,
    tt_nss,
)
from .stylizer import AdaINStylizer, adain

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "AdaINStylizer",
    "CapabilityError",
    "CheckpointError",
    "ConfidenceAbstainer",
    "ConfigError",
    "ContractError",
    "CorruptionSpec",
    "Dataset",
    "DimensionError",
    "DomainError",
    "DomainSpec",
    "InputError",
    "LabelOnlyClassifier",
    "NSSClassifier",
    "NssConfig",
    "RiskCoverageCurve",
    "ScoredPrediction",
    "SmoothingConfig",
    "StyleBank",
    "StyleSmoothError",
    "StyleSmoothedClassifier",
    "Suite",
    "ToyClassifier",
    "Verdict",
    "abstained_accuracy",
    "adain",
    "build_curve",
    "compare_methods",
    "confidence_abstain",
    "consensus_profile",
    "corrupt",
    "generate_domain",
    "standard_suite",
    "styles_sweep",
    "tt_nss",
]
