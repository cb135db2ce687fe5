// metasep/scoring.hpp

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

#ifndef METASEP_SCORING_HPP_
#define METASEP_SCORING_HPP_

#include <vector>

#include "metasep/sepmodel.hpp"
#include "metasep/signal.hpp"
#include "metasep/tasks.hpp"

namespace metasep {

// Si-SNR improvement of one separated mixture, averaged over sources under
// the uPIT-optimal assignment of estimates to references.
inline double mixture_si_snri(const ParamVector &params,
                              const MixtureExample &ex,
                              const ModelConfig &cfg) {
  SeparatedOutput out = separate(params, ex.mixture, cfg);
  auto [loss, perm] = upit_loss(out.estimates, ex.sources);
  (void)loss;
  double acc = 0.0;
  for (size_t c = 0; c < out.estimates.size(); ++c)
    acc += si_snr(out.estimates[c], ex.sources[perm[c]]) -
           si_snr(ex.mixture, ex.sources[perm[c]]);
  return acc / static_cast<double>(out.estimates.size());
}

// Mean query Si-SNRi of one task.
inline double task_query_si_snri(const ParamVector &params,
                                 const MetaTask &task,
                                 const ModelConfig &cfg) {
  double acc = 0.0;
  for (const auto &ex : task.query) acc += mixture_si_snri(params, ex, cfg);
  return acc / static_cast<double>(task.query.size());
}

}  // namespace metasep

#endif  // METASEP_SCORING_HPP_
