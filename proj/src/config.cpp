#include "viewsynth/config.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "viewsynth/checksum.hpp"
#include "viewsynth/errors.hpp"
#include "viewsynth/image.hpp"

namespace viewsynth {

std::string format_double(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view raw) {
    const std::string text = trim(raw);
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw InvalidField(std::string(key), "cannot parse '" + text + "' as a number");
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view raw) {
    const std::string text = trim(raw);
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw InvalidField(std::string(key), "expected true/false, got '" + text + "'");
}

template <typename T>
ConfigKey integer_key(std::string name, std::string help, T PipelineConfig::*member) {
    return ConfigKey{name, std::move(help),
                     [name, member](PipelineConfig& c, std::string_view v) { c.*member = parse_number<T>(name, v); },
                     [member](const PipelineConfig& c) { return std::to_string(c.*member); }};
}

ConfigKey real_key(std::string name, std::string help, double PipelineConfig::*member) {
    return ConfigKey{name, std::move(help),
                     [name, member](PipelineConfig& c, std::string_view v) { c.*member = parse_number<double>(name, v); },
                     [member](const PipelineConfig& c) { return format_double(c.*member); }};
}

ConfigKey bool_key(std::string name, std::string help, bool PipelineConfig::*member) {
    return ConfigKey{name, std::move(help),
                     [name, member](PipelineConfig& c, std::string_view v) { c.*member = parse_bool(name, v); },
                     [member](const PipelineConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

ConfigKey string_key(std::string name, std::string help, std::string PipelineConfig::*member) {
    return ConfigKey{name, std::move(help),
                     [member](PipelineConfig& c, std::string_view v) { c.*member = trim(v); },
                     [member](const PipelineConfig& c) { return c.*member; }};
}

std::vector<ConfigKey> build_keys() {
    std::vector<ConfigKey> keys;
    keys.push_back(integer_key("seed", "global random seed", &PipelineConfig::seed));
    keys.push_back(integer_key("image_size", "working resolution in pixels (multiple of 8, >= 64)", &PipelineConfig::image_size));
    keys.push_back(integer_key("embed_opt_steps_input", "embedding steps on the input image", &PipelineConfig::embed_opt_steps_input));
    keys.push_back(integer_key("lora_steps_input", "adapter steps on the input image", &PipelineConfig::lora_steps_input));
    keys.push_back(integer_key("embed_opt_steps_view", "embedding steps on the guidance view", &PipelineConfig::embed_opt_steps_view));
    keys.push_back(integer_key("lora_steps_view", "adapter steps on the guidance view", &PipelineConfig::lora_steps_view));
    keys.push_back(real_key("embed_lr", "embedding learning rate", &PipelineConfig::embed_lr));
    keys.push_back(real_key("lora_lr", "adapter learning rate", &PipelineConfig::lora_lr));
    keys.push_back(integer_key("lora_rank", "low-rank adapter rank", &PipelineConfig::lora_rank));
    keys.push_back(ConfigKey{
        "optimizer", "adam | sgd",
        [](PipelineConfig& c, std::string_view v) {
            const std::string t = trim(v);
            if (t == "adam") c.optimizer = OptimizerKind::adam;
            else if (t == "sgd") c.optimizer = OptimizerKind::sgd;
            else throw InvalidField("optimizer", "expected adam or sgd, got '" + t + "'");
        },
        [](const PipelineConfig& c) { return std::string(c.optimizer == OptimizerKind::adam ? "adam" : "sgd"); }});
    keys.push_back(bool_key("cold_start_view_embedding", "restart the view-phase embedding from the caption encoding",
                            &PipelineConfig::cold_start_view_embedding));
    keys.push_back(bool_key("reset_view_adapters", "re-initialize adapters before the view phase",
                            &PipelineConfig::reset_view_adapters));
    keys.push_back(real_key("cfg_scale", "classifier-free guidance scale", &PipelineConfig::cfg_scale));
    keys.push_back(ConfigKey{
        "cfg_negative", "empty | source: conditioning of the unconditional branch",
        [](PipelineConfig& c, std::string_view v) {
            const std::string t = trim(v);
            if (t == "empty") c.cfg_negative = CfgNegative::empty;
            else if (t == "source") c.cfg_negative = CfgNegative::source;
            else throw InvalidField("cfg_negative", "expected empty or source, got '" + t + "'");
        },
        [](const PipelineConfig& c) { return std::string(c.cfg_negative == CfgNegative::empty ? "empty" : "source"); }});
    keys.push_back(integer_key("sampler_steps", "number of sampling steps", &PipelineConfig::sampler_steps));
    keys.push_back(real_key("mi_weight", "mutual-information guidance weight (0 disables)", &PipelineConfig::mi_weight));
    keys.push_back(integer_key("mi_bins", "soft-histogram bins", &PipelineConfig::mi_bins));
    keys.push_back(real_key("mi_bandwidth", "soft-histogram Gaussian bandwidth, intensity units", &PipelineConfig::mi_bandwidth));
    keys.push_back(real_key("mi_start_frac", "fraction of sampling progress where MI guidance starts", &PipelineConfig::mi_start_frac));
    keys.push_back(real_key("mi_end_frac", "fraction of sampling progress where MI guidance stops", &PipelineConfig::mi_end_frac));
    keys.push_back(bool_key("snap_to_supported_views", "snap requested views to the guidance model's grid",
                            &PipelineConfig::snap_to_supported_views));
    keys.push_back(ConfigKey{
        "views", "view list 'elev,azi;elev,azi;...'",
        [](PipelineConfig& c, std::string_view v) { c.views = parse_view_list(v); },
        [](const PipelineConfig& c) { return format_view_list(c.views); }});
    keys.push_back(real_key("val_fraction", "validation split fraction", &PipelineConfig::val_fraction));
    keys.push_back(integer_key("split_seed", "validation split seed", &PipelineConfig::split_seed));
    keys.push_back(string_key("backbone", "diffusion backbone: mock", &PipelineConfig::backbone));
    keys.push_back(string_key("nvs", "guidance backend: mock | http://host:port", &PipelineConfig::nvs));
    keys.push_back(string_key("cache_dir", "guidance cache directory", &PipelineConfig::cache_dir));
    keys.push_back(string_key("captioner", "caption source: none | mock | http://host:port", &PipelineConfig::captioner));
    keys.push_back(real_key("captioner.timeout_s", "captioner request timeout in seconds", &PipelineConfig::captioner_timeout_s));
    keys.push_back(integer_key("captioner.retries", "captioner retry count", &PipelineConfig::captioner_retries));
    keys.push_back(string_key("encoder", "image-text encoder: mock-feature-v1 | http://host:port", &PipelineConfig::encoder));
    keys.push_back(string_key("perceptual_model", "perceptual distance model: filterbank-lpips-v1", &PipelineConfig::perceptual_model));
    keys.push_back(string_key("method", "method label written to reports", &PipelineConfig::method));
    return keys;
}

void require(bool ok, const char* field, const std::string& constraint) {
    if (!ok) throw InvalidField(field, constraint);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
    for (const auto& k : config_keys()) {
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    }
    throw InvalidField(std::string(key), "unknown configuration key");
}

PipelineConfig validate_config(PipelineConfig cfg) {
    require(cfg.image_size >= 64 && cfg.image_size % 8 == 0, "image_size", "must be >= 64 and a multiple of 8");
    require(cfg.embed_opt_steps_input >= 1, "embed_opt_steps_input", "must be >= 1");
    require(cfg.lora_steps_input >= 1, "lora_steps_input", "must be >= 1");
    require(cfg.embed_opt_steps_view >= 1, "embed_opt_steps_view", "must be >= 1");
    require(cfg.lora_steps_view >= 1, "lora_steps_view", "must be >= 1");
    require(std::isfinite(cfg.embed_lr) && cfg.embed_lr > 0.0, "embed_lr", "must be > 0");
    require(std::isfinite(cfg.lora_lr) && cfg.lora_lr > 0.0, "lora_lr", "must be > 0");
    require(cfg.lora_rank >= 1, "lora_rank", "must be >= 1");
    require(std::isfinite(cfg.cfg_scale), "cfg_scale", "must be finite");
    require(cfg.sampler_steps >= 1, "sampler_steps", "must be >= 1");
    require(std::isfinite(cfg.mi_weight) && cfg.mi_weight >= 0.0, "mi_weight", "must be >= 0");
    require(cfg.mi_bins >= 2, "mi_bins", "must be >= 2");
    require(std::isfinite(cfg.mi_bandwidth) && cfg.mi_bandwidth > 0.0, "mi_bandwidth", "must be > 0");
    require(cfg.mi_start_frac >= 0.0 && cfg.mi_end_frac <= 1.0 && cfg.mi_start_frac < cfg.mi_end_frac, "mi_start_frac",
            "need 0 <= mi_start_frac < mi_end_frac <= 1");
    require(!cfg.views.empty(), "views", "at least one view is required");
    for (auto& v : cfg.views) v = make_view(v.elevation_deg, v.azimuth_deg);
    require(cfg.val_fraction > 0.0 && cfg.val_fraction <= 1.0, "val_fraction", "must lie in (0, 1]");
    require(!cfg.backbone.empty(), "backbone", "must not be empty");
    require(!cfg.nvs.empty(), "nvs", "must not be empty");
    require(std::isfinite(cfg.captioner_timeout_s) && cfg.captioner_timeout_s > 0.0, "captioner.timeout_s", "must be > 0");
    require(cfg.captioner_retries >= 0, "captioner.retries", "must be >= 0");
    require(!cfg.encoder.empty(), "encoder", "must not be empty");
    require(!cfg.perceptual_model.empty(), "perceptual_model", "must not be empty");
    require(!cfg.method.empty() && cfg.method.find_first_of(",\n\"") == std::string::npos, "method",
            "must be non-empty without commas, quotes or newlines");
    return cfg;
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
    std::set<std::string> seen;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InvalidField("line " + std::to_string(line_no), "expected 'key = value'");
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (!seen.insert(key).second) throw InvalidField(key, "key given more than once");
        set_config_value(base, key, std::string_view(line).substr(eq + 1));
    }
    return base;
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
    if (!std::filesystem::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
    return parse_config(read_text_file(path), std::move(base));
}

std::string serialize_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

std::string config_hash(const PipelineConfig& cfg) {
    return sha256_hex(serialize_config(cfg)).substr(0, 16);
}

}  // namespace viewsynth
