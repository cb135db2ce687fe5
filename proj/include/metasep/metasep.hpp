// metasep/metasep.hpp

// Copyright 2026  The metasep authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Umbrella header: one-shot meta-learning for mask-based source separation
// at desk scale.

#ifndef METASEP_METASEP_HPP_
#define METASEP_METASEP_HPP_

#include "metasep/checkpoint.hpp"
#include "metasep/corpus.hpp"
#include "metasep/diffcore.hpp"
#include "metasep/dual.hpp"
#include "metasep/errors.hpp"
#include "metasep/eval.hpp"
#include "metasep/experiment.hpp"
#include "metasep/metatrain.hpp"
#include "metasep/parallel.hpp"
#include "metasep/params.hpp"
#include "metasep/rng.hpp"
#include "metasep/scoring.hpp"
#include "metasep/sepmodel.hpp"
#include "metasep/signal.hpp"
#include "metasep/tasks.hpp"
#include "metasep/wav.hpp"

#endif  // METASEP_METASEP_HPP_
