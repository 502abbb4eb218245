#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hazemeta/datagen.hpp"
#include "hazemeta/evaluate.hpp"
#include "hazemeta/trainer.hpp"

namespace hazemeta::config {

/// Fully resolved run configuration: training hyperparameters, domain specs
/// and evaluation settings, loaded from JSON with `section.key=value`
/// overrides applied last.
struct RunConfig {
    trainer::TrainConfig train;
    std::vector<datagen::DomainSpec> domains;     // training domains
    std::vector<datagen::DomainSpec> heldout;     // evaluation-only domains
    evaluate::EvalOptions eval;
    std::vector<uint64_t> ablation_seeds = {1, 2, 3};

    std::string to_json() const;
};

// Three-domain default: two training domains with distinct beta/A/depth-bias
// ranges and one harder held-out domain.
RunConfig default_config();

// Parses the file (empty path: defaults) and applies overrides of the form
// "section.key=value". Unknown keys fail with the nearest valid key named.
RunConfig parse_config(const std::filesystem::path& file,
                       const std::vector<std::string>& overrides);

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides);

std::vector<std::string> known_keys();

// Writes the resolved config beside run outputs.
void save_resolved(const RunConfig& cfg, const std::filesystem::path& dir);

} // namespace hazemeta::config
