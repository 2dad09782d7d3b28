# Copyright (c) 2026 The moelora Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the moelora toolkit."""

from ._core import (
    DimensionError,
    IoError,
    Model,
    NumericError,
    ValidationError,
    compute_eer,
    config_echo,
    count_params,
    det_points,
    gen_clip,
    generate_corpus,
    grad_check,
    load_corpus,
    write_corpus,
)

__all__ = [
    "DimensionError",
    "IoError",
    "Model",
    "NumericError",
    "ValidationError",
    "compute_eer",
    "config_echo",
    "count_params",
    "det_points",
    "gen_clip",
    "generate_corpus",
    "grad_check",
    "load_corpus",
    "write_corpus",
]
