# Copyright 2026 The D-MoE Authors. All Rights Reserved.
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

"""Mixture-of-experts CTR models with cross-expert de-correlation."""

from ._dmoe import (
    Dataset,
    Model,
    RunConfig,
    auc,
    build_model,
    cec,
    corr_loss,
    cov_loss,
    evaluate,
    fnv1a_64,
    gen_synthetic,
    gradcheck,
    hash_token,
    load_model,
    load_run_config,
    load_table,
    parse_run_config,
    pearson_matrix,
    predict,
    save_model,
    split_dataset,
    total_objective,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "RunConfig",
    "auc",
    "build_model",
    "cec",
    "corr_loss",
    "cov_loss",
    "evaluate",
    "fnv1a_64",
    "gen_synthetic",
    "gradcheck",
    "hash_token",
    "load_model",
    "load_run_config",
    "load_table",
    "parse_run_config",
    "pearson_matrix",
    "predict",
    "save_model",
    "split_dataset",
    "total_objective",
    "train",
]
