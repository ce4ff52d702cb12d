# Copyright 2026 The conlab Authors.
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

"""Contrastive sequence-level training for seq2seq summarization."""

from ._conlab import (
    BOS,
    EOS,
    PAD,
    UNK,
    CheckpointError,
    ConfigError,
    DataError,
    Model,
    ModelConfig,
    SyntheticCorpus,
    Vocab,
    build_vocab,
    combined_loss,
    contrastive_loss,
    corpus_rouge,
    lcs_length,
    lr_factor,
    nll_loss,
    resolve_config,
    rouge,
    run_cli,
    score_sequence,
    synth_corpus,
    tokenize,
    train,
)

__version__ = "0.1.0"
