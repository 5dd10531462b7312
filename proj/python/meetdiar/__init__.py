# Copyright 2026 The meetdiar Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the meetdiar diarization toolkit."""

from ._meetdiar import (
    ConfigError,
    IoError,
    Model,
    ParseError,
    ShapeError,
    UsageError,
    compute_features,
    der,
    log_mel,
    median_filter,
    pit_loss,
    postprocess,
    rttm_read,
    rttm_write,
    selfcheck,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "IoError",
    "Model",
    "ParseError",
    "ShapeError",
    "UsageError",
    "compute_features",
    "der",
    "log_mel",
    "median_filter",
    "pit_loss",
    "postprocess",
    "rttm_read",
    "rttm_write",
    "selfcheck",
]
