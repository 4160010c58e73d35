"""GPS L1 C/A spoofing detection by fingerprinting EPL correlator outputs."""

__version__ = "0.1.0"

from .prn_codes import CaCode, circular_correlate, generate_ca_code, sample_code
from .signal_sim import (AttackConfig, HardwareSignature, IqStream,
                         SatelliteScenario, apply_multipath, spoof_overlay,
                         synthesize_genuine, synthesize_nav_bits)
from .receiver_core import (AcquisitionResult, CorrelatorEpoch, TrackingConfig,
                            TrackResult, acquire, carrier_lock_metric,
                            estimate_cn0, lock_tests, track_channel)
from .fingerprint_features import (FeatureTable, FeatureVector,
                                   FeatureWindowConfig, extract_features,
                                   feature_template)
from .mvn_model import (MvnModel, avg_score, density, fit, log_density,
                        max_density)
from .spoof_detector import (Decision, DetectorProfile, EvalReport,
                             SpoofTimingReport, classify, detect_stream,
                             eer_threshold, evaluate, kfold_xval, prn_sets,
                             required_n_for_zero_eer, spoof_timing, train)
