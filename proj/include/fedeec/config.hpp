#pragma once

#include <string>
#include <vector>

#include "fedeec/agglomerator.hpp"

namespace fedeec::config {

struct Diagnostic {
  std::string locator;  // e.g. "[models] tier2" or "[topology] tree:17"
  std::string message;

  std::string format() const { return locator + ": " + message; }
};

/// Parse the sectioned key-value config text. Syntax errors and unknown
/// keys throw an Error whose message carries the locator; semantic checks
/// live in validate().
sim::ExperimentConfig parse(const std::string& text);
sim::ExperimentConfig parse_file(const std::string& path);

/// Full structural + invariant validation without running: topology
/// well-formedness, tier model coverage and monotone sizes, hyperparameter
/// ranges, migration targets. Empty result means the config is runnable.
std::vector<Diagnostic> validate(const sim::ExperimentConfig& cfg);

/// The default experiment shipped with the repo.
std::string default_config_text();

}  // namespace fedeec::config
