#pragma once

#include <map>
#include <string>
#include <vector>

#include "dhglm/amis.hpp"
#include "dhglm/mcmc.hpp"
#include "dhglm/sim_data.hpp"

namespace dhglm {

enum class RunScale { Paper, Desk };

RunScale scale_from_string(const std::string& s);
std::string to_string(RunScale s);

// A fully assembled experiment: data, model, conditioning plan, and tuned
// sampler configurations. Desk scale shrinks the sample sizes four-fold and
// the sampler budgets so a full run stays in the minutes range.
struct PresetRun {
  std::string id;
  std::string description;
  Dataset data;
  DhglmSpec spec;
  ConditioningPlan plan;
  AmisConfig amis;
  McmcConfig mcmc;
  bool permutation_init = false;  // refine amis.init_mean by permutation search
  int n_permutations = 500;
  bool expect_low_ess = false;  // pathological-by-construction scenario
  std::map<std::string, double> true_values;  // empty for real-data-shaped runs
};

std::vector<std::string> preset_ids();
bool is_preset(const std::string& id);
std::string preset_description(const std::string& id);

PresetRun build_preset(const std::string& id, RunScale scale, std::uint64_t seed);

}  // namespace dhglm
