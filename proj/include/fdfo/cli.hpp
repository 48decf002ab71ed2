#pragma once
// Command-line front end: pretrain / posttrain / eval / verify / plot.
// Exit codes: 0 success, 1 verification failure, 2 config or usage error,
// 3 training divergence.

#include <cstdint>
#include <string>
#include <vector>

#include "fdfo/config.hpp"
#include "fdfo/net.hpp"

namespace fdfo {

struct EvalRow {
  int condition = 0;  // -1 marks the overall row
  int n = 0;
  double mean_reward = 0.0;
  double alignment = 0.0;  // fraction landing in a mode of the right condition
  double diversity = 0.0;  // mean pairwise distance within the condition
};

// Deterministic-sampler evaluation on dedicated evaluation streams (disjoint
// from every training stream by construction). Appends an overall row.
std::vector<EvalRow> evaluate_net(const VelocityNet& net, const DatasetSpec& data,
                                  const RewardBinding& reward, int n_per_cond,
                                  int steps, uint64_t seed, double cfg_scale);

int run_cli(int argc, const char* const* argv);

}  // namespace fdfo
