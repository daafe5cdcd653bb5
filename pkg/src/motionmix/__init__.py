"""Conditional denoising diffusion for motion sequences trained from a
mixture of corrupted-but-annotated and clean-but-unannotated data.

The package is organized around a timestep pivot t_star: corrupted
annotated samples supervise the high-noise conditional stage of the chain,
clean unannotated samples supervise the low-noise refinement stage, and
sampling runs the two stages back to back.
"""

from .dataset import (MixedDataset, MotionExample, generate_corpus,
                      load_dataset, prepare_mixed, prepare_naive_baseline,
                      save_dataset, save_motions)
from .errors import ConfigError, DataFormatError, NumericsError
from .evaluation import (ExtractorParams, MetricsReport, accuracy, diversity,
                         evaluate_samples, extract_features, frechet_distance,
                         multimodality, predict_labels, repeat_evaluate,
                         train_feature_extractor)
from .model import (DenoiserConfig, DenoiserParams, denoise_batch,
                    denoise_forward, init_params, mse_loss_and_grad,
                    null_index, param_shapes, time_embedding)
from .oracle import (GaussianWorld, gaussian_optimal_x0,
                     optimal_x0_from_alpha_bar, oracle_sample)
from .sampling import (SamplerConfig, cfg_combine, edit_sample, reverse_chain,
                       sample_many, two_stage_sample)
from .schedule import (NoiseSchedule, ParamKind, build_linear_schedule,
                       default_schedule, forward_diffuse,
                       posterior_mean_variance, pred_to_x0, reverse_step,
                       schedule_from_betas)
from .training import (OptimizerState, TrainConfig, TrainLog, adam_init,
                       adam_step, apply_cfg_dropout, load_checkpoint,
                       make_train_target, sample_timestep, save_checkpoint,
                       timestep_range, train)

__version__ = "0.1.0"
