"""Solar-irradiance nowcasting and ahead-of-time forecasting from sky-camera
video, built on a self-contained reverse-mode autodiff engine.

The pieces, bottom up: ``tensor`` (autograd substrate), ``layers`` (dilated
convolution, pooling, dense, dropout, LSTM), ``optim`` (log-cosh loss, L2,
Adam), ``solar`` (sun position and clear-sky irradiance), ``data``
(manifests, image normalization, windows, splits), ``nowcast`` / ``forecast``
(the two model stages), ``metrics`` (nMAP, reports, baselines), ``synth``
(deterministic scene generator) and ``cli`` (the ``skycast`` command).
"""

from .data import (AuxStats, ForecastWindow, FrameRecord, SkySample,
                   build_forecast_windows, decode_and_normalize, load_manifest,
                   load_samples, normalize_aux, split_by_date)
from .errors import (ConfigError, DataError, DecodeError, DomainError, FitError,
                     MetricError, NumericError, ShapeError, SkycastError)
from .forecast import (ForecastConfig, ForecastModel, build_forecast, load_forecast,
                       save_forecast, train_forecast)
from .layers import (LSTM, Conv2D, Dense, Dropout, conv2d, dense, dropout,
                     lstm_sequence, maxpool2d)
from .metrics import (EvalRecord, EvalReport, aux_regression, evaluate, nmap,
                      persistence_baseline)
from .nowcast import (NowcastConfig, NowcastModel, build_nowcast, load_nowcast,
                      save_nowcast, train_nowcast)
from .optim import Adam, AdamConfig, LossConfig, l2_penalty, logcosh_loss
from .solar import (GeoLocation, SolarPosition, clearsky_irradiance, daylight_filter,
                    solar_position)
from .synth import (CloudSpec, SceneConfig, WeatherParams, generate_scene,
                    random_clouds, scene_truth)
from .tensor import Parameter, Tape, Tensor, create, grad_check

__version__ = "0.1.0"
