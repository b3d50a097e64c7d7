#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "picg/train_eval.hpp"

namespace picg {

// Flat `section.key = value` configuration text. '#' starts a comment.
// Serialization is key-sorted so resolved configs diff cleanly.
class FlatConfig {
  public:
    static FlatConfig parse(const std::string& text);
    static FlatConfig parse_file(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string serialize() const;

  private:
    std::map<std::string, std::string> values_;
};

// Every knob a run can use, resolved from defaults + config file + flags.
struct RunConfig {
    SynthConfig synth;
    ExperimentConfig experiment;  // teacher config, schedules, loss, seeds, arms
    std::string backbone = "vgg3d";
    std::vector<double> alphas = {0.2, 0.4, 0.6};

    static RunConfig from_flat(const FlatConfig& flat);
    FlatConfig to_flat() const;
};

// Parses "a,b,c" lists; throws config_error on malformed entries.
std::vector<double> parse_double_list(const std::string& text);
std::vector<uint64_t> parse_seed_list(const std::string& text);
std::array<int, 3> parse_shape(const std::string& text);
Split parse_split(const std::string& text);

}  // namespace picg
