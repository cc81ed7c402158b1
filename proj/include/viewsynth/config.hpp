#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "viewsynth/core.hpp"

namespace viewsynth {

enum class OptimizerKind { adam, sgd };

/// What the classifier-free-guidance "negative" branch is conditioned on.
enum class CfgNegative { empty, source };

/// Every tunable of the pipeline. Defaults are starting points for the
/// toy/mock stack and a stable-diffusion-class backbone alike.
struct PipelineConfig {
    std::uint64_t seed = 0;
    int image_size = 512;

    int embed_opt_steps_input = 400;
    int lora_steps_input = 400;
    int embed_opt_steps_view = 400;
    int lora_steps_view = 400;
    double embed_lr = 5e-3;
    double lora_lr = 1e-3;
    int lora_rank = 4;
    OptimizerKind optimizer = OptimizerKind::adam;
    bool cold_start_view_embedding = false;
    bool reset_view_adapters = false;

    double cfg_scale = 7.5;
    CfgNegative cfg_negative = CfgNegative::empty;
    int sampler_steps = 50;
    double mi_weight = 0.5;
    int mi_bins = 32;
    double mi_bandwidth = 0.02;
    double mi_start_frac = 0.1;
    double mi_end_frac = 0.9;

    bool snap_to_supported_views = true;
    std::vector<ViewSpec> views = evaluation_views();
    double val_fraction = 0.10;
    std::uint64_t split_seed = 0;

    std::string backbone = "mock";
    std::string nvs = "mock";
    std::string cache_dir;
    std::string captioner = "none";
    double captioner_timeout_s = 30.0;
    int captioner_retries = 2;
    std::string encoder = "mock-feature-v1";
    std::string perceptual_model = "filterbank-lpips-v1";
    std::string method = "ours";

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// One entry of the flat `key = value` schema. CLI flags are `--<name>`.
struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(PipelineConfig&, std::string_view)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value. Unknown keys and malformed values
/// throw InvalidField.
void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value);

/// Normalizes (azimuths wrapped into [0, 360)) and checks every field.
/// Idempotent on valid input. Throws InvalidField naming the field.
PipelineConfig validate_config(PipelineConfig cfg);

/// `key = value` lines; '#' starts a comment line.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});
std::string serialize_config(const PipelineConfig& cfg);

/// First 16 hex digits of SHA-256 over the serialized config.
std::string config_hash(const PipelineConfig& cfg);

/// Shortest round-trip decimal form.
std::string format_double(double value);

}  // namespace viewsynth
