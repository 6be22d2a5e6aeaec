"""Burst-level wireless protocol classification on synthetic IQ recordings.

The pipeline: synthesize labeled scenes (signal_model), find bursts with a
twin-window energy-ratio detector (burst_detect), turn bursts into
width/gap/PAPR features (features), classify with from-scratch SVM or KNN
(svm, knn), and reproduce the clean-train/noisy-test methodology
(evaluation).  The cli module wires the stages into file-based pipelines.
"""

from .burst_detect import (DetectedBurst, DetectorConfig, detect_bursts,
                           energy_ratio, load_detections, save_detections,
                           smooth_power)
from .evaluation import (DEFAULT_SNR_GRID_DB, EvalReport, METHOD_NAMES,
                         SnrPoint, build_feature_corpus,
                         build_test_recordings, emit_report, evaluate,
                         load_model, match_detections, match_pairs,
                         reports_from_json, run_clean_experiment,
                         run_noise_study, save_model, score_detections,
                         split_train_test, train_method)
from .features import (FEATURE_NAMES_3D, LabeledDataset, TIME_FEATURE_NAMES,
                       UNLABELED, concat_datasets, extract_dataset,
                       frame_width, load_dataset, papr, save_dataset,
                       silence_gap, standardize)
from .knn import (KnnModel, euclidean_distance, k_nearest, knn_from_dict,
                  knn_to_dict, load_knn, save_knn, train_knn)
from .signal_model import (BurstTruth, DEFAULT_SAMPLE_RATE_HZ,
                           GeneratorConfig, IqRecording, ProtocolLabel,
                           Scenario, TruthBurst, add_awgn, generate,
                           generate_beacon, generate_bluetooth,
                           generate_mixed, generate_wifi_exchange,
                           load_recording, load_truth, overlap_fraction,
                           save_recording, save_truth, us_to_samples)
from .svm import (BinarySvmModel, KernelSpec, MultiClassSvmModel,
                  decision_value, decision_values, kernel_eval,
                  kernel_matrix, load_svm, median_pairwise_sq_dist,
                  resolve_kernel, save_svm, svm_from_dict, svm_to_dict,
                  train_binary, train_one_vs_all)

__version__ = "0.1.0"
