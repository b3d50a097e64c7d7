#include "picg/config.hpp"

#include <set>
#include <sstream>

#include "picg/serialize.hpp"

namespace picg {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace((unsigned char)s[b])) ++b;
    while (e > b && std::isspace((unsigned char)s[e - 1])) --e;
    return s.substr(b, e - b);
}

}  // namespace

FlatConfig FlatConfig::parse(const std::string& text) {
    FlatConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(line_no) +
                               " is not key = value: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw config_error("config line " + std::to_string(line_no) +
                                            " has an empty key");
        cfg.values_[key] = value;
    }
    return cfg;
}

FlatConfig FlatConfig::parse_file(const std::filesystem::path& path) {
    try {
        return parse(read_text_file(path));
    } catch (const io_error& e) {
        throw config_error(std::string("cannot read config file: ") + e.what());
    }
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int FlatConfig::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not an integer: " + it->second);
    }
}

uint64_t FlatConfig::get_uint64(const std::string& key, uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return uint64_t(v);
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not an unsigned integer: " + it->second);
    }
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw config_error("config key " + key + " is not a number: " + it->second);
    }
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw config_error("config key " + key + " is not a boolean: " + it->second);
}

std::string FlatConfig::serialize() const {
    std::ostringstream os;
    for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
    return os.str();
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw config_error("malformed number in list: " + item);
        }
    }
    if (out.empty()) throw config_error("empty number list: " + text);
    return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw config_error("malformed seed in list: " + item);
        }
    }
    if (out.empty()) throw config_error("empty seed list: " + text);
    return out;
}

std::array<int, 3> parse_shape(const std::string& text) {
    std::array<int, 3> shape;
    char sep1 = 0, sep2 = 0;
    std::istringstream ss(text);
    if (!(ss >> shape[0] >> sep1 >> shape[1] >> sep2 >> shape[2]) || sep1 != 'x' || sep2 != 'x')
        throw config_error("shape must look like 4x32x32, got: " + text);
    return shape;
}

Split parse_split(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw config_error("unknown split: " + text + " (expected train, val or test)");
}

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "dataset.dir", "out.dir", "assets.dir",
        "synth.seed", "synth.n_train", "synth.n_val", "synth.n_test", "synth.shape",
        "synth.class_distribution", "synth.label_noise",
        "teacher.encoder_layers", "teacher.encoder_dim", "teacher.encoder_heads",
        "teacher.decoder_layers", "teacher.decoder_dim", "teacher.decoder_heads",
        "teacher.vocab_size", "teacher.max_seq_len", "teacher.patch_k", "teacher.patch_depth",
        "teacher.seed",
        "stage1.epochs", "stage1.warmup_epochs", "stage1.learning_rate", "stage1.weight_decay",
        "stage1.batch_size", "stage1.seed",
        "stage2.epochs", "stage2.warmup_epochs", "stage2.learning_rate", "stage2.weight_decay",
        "stage2.batch_size", "stage2.seed",
        "student.epochs", "student.warmup_epochs", "student.learning_rate",
        "student.weight_decay", "student.batch_size", "student.seed",
        "loss.alpha", "loss.temperature", "loss.gamma", "loss.class_weights",
        "backbone", "backbones", "seeds", "alphas", "eval.split",
        "suite.include_baseline_mllm",
    };
    return keys;
}

StageSchedule schedule_from_flat(const FlatConfig& flat, const std::string& prefix,
                                 StageSchedule defaults) {
    defaults.epochs = flat.get_int(prefix + ".epochs", defaults.epochs);
    defaults.warmup_epochs = flat.get_int(prefix + ".warmup_epochs", defaults.warmup_epochs);
    defaults.learning_rate = flat.get_double(prefix + ".learning_rate", defaults.learning_rate);
    defaults.weight_decay = flat.get_double(prefix + ".weight_decay", defaults.weight_decay);
    defaults.batch_size = flat.get_int(prefix + ".batch_size", defaults.batch_size);
    defaults.seed = flat.get_uint64(prefix + ".seed", defaults.seed);
    return defaults;
}

void schedule_to_flat(FlatConfig& flat, const std::string& prefix, const StageSchedule& s) {
    flat.set(prefix + ".epochs", std::to_string(s.epochs));
    flat.set(prefix + ".warmup_epochs", std::to_string(s.warmup_epochs));
    flat.set(prefix + ".learning_rate", format_exact(s.learning_rate));
    flat.set(prefix + ".weight_decay", format_exact(s.weight_decay));
    flat.set(prefix + ".batch_size", std::to_string(s.batch_size));
    flat.set(prefix + ".seed", std::to_string(s.seed));
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += format_exact(values[i]);
    }
    return out;
}

}  // namespace

RunConfig RunConfig::from_flat(const FlatConfig& flat) {
    for (const auto& [key, value] : flat.values())
        if (!known_keys().count(key))
            throw config_error("unknown config key: " + key);

    RunConfig cfg;
    cfg.synth.seed = flat.get_uint64("synth.seed", cfg.synth.seed);
    cfg.synth.n_train = flat.get_int("synth.n_train", cfg.synth.n_train);
    cfg.synth.n_val = flat.get_int("synth.n_val", cfg.synth.n_val);
    cfg.synth.n_test = flat.get_int("synth.n_test", cfg.synth.n_test);
    if (flat.has("synth.shape")) cfg.synth.shape = parse_shape(flat.get_string("synth.shape", ""));
    if (flat.has("synth.class_distribution")) {
        const auto dist = parse_double_list(flat.get_string("synth.class_distribution", ""));
        if (dist.size() != 5)
            throw config_error("synth.class_distribution needs exactly 5 entries");
        std::copy(dist.begin(), dist.end(), cfg.synth.class_distribution.begin());
    }
    cfg.synth.label_noise = flat.get_bool("synth.label_noise", cfg.synth.label_noise);

    ExperimentConfig& exp = cfg.experiment;
    exp.dataset_dir = flat.get_string("dataset.dir", "dataset");
    exp.out_dir = flat.get_string("out.dir", "out");
    exp.teacher.encoder_layers = flat.get_int("teacher.encoder_layers", exp.teacher.encoder_layers);
    exp.teacher.encoder_dim = flat.get_int("teacher.encoder_dim", exp.teacher.encoder_dim);
    exp.teacher.encoder_heads = flat.get_int("teacher.encoder_heads", exp.teacher.encoder_heads);
    exp.teacher.decoder_layers = flat.get_int("teacher.decoder_layers", exp.teacher.decoder_layers);
    exp.teacher.decoder_dim = flat.get_int("teacher.decoder_dim", exp.teacher.decoder_dim);
    exp.teacher.decoder_heads = flat.get_int("teacher.decoder_heads", exp.teacher.decoder_heads);
    exp.teacher.vocab_size = flat.get_int("teacher.vocab_size", exp.teacher.vocab_size);
    exp.teacher.max_seq_len = flat.get_int("teacher.max_seq_len", exp.teacher.max_seq_len);
    exp.teacher.patch_k = flat.get_int("teacher.patch_k", exp.teacher.patch_k);
    exp.teacher.patch_depth = flat.get_int("teacher.patch_depth", exp.teacher.patch_depth);
    exp.teacher_seed = flat.get_uint64("teacher.seed", exp.teacher_seed);

    exp.stage1 = schedule_from_flat(flat, "stage1", default_stage1_schedule());
    exp.stage2 = schedule_from_flat(flat, "stage2", default_stage2_schedule());
    exp.student = schedule_from_flat(flat, "student", default_student_schedule());

    exp.loss.alpha = flat.get_double("loss.alpha", exp.loss.alpha);
    exp.loss.temperature = flat.get_double("loss.temperature", exp.loss.temperature);
    exp.loss.focal.gamma = flat.get_double("loss.gamma", exp.loss.focal.gamma);
    if (flat.has("loss.class_weights")) {
        const auto weights = parse_double_list(flat.get_string("loss.class_weights", ""));
        if (weights.size() != 5) throw config_error("loss.class_weights needs exactly 5 entries");
        std::copy(weights.begin(), weights.end(), exp.loss.focal.class_weights.begin());
    }

    cfg.backbone = flat.get_string("backbone", cfg.backbone);
    if (flat.has("backbones")) {
        exp.backbones.clear();
        std::istringstream ss(flat.get_string("backbones", ""));
        std::string item;
        while (std::getline(ss, item, ',')) exp.backbones.push_back(item);
        if (exp.backbones.empty()) throw config_error("backbones list is empty");
    }
    if (flat.has("seeds")) exp.seeds = parse_seed_list(flat.get_string("seeds", ""));
    if (flat.has("alphas")) cfg.alphas = parse_double_list(flat.get_string("alphas", ""));
    exp.eval_split = parse_split(flat.get_string("eval.split", "val"));
    exp.include_baseline_mllm =
        flat.get_bool("suite.include_baseline_mllm", exp.include_baseline_mllm);
    return cfg;
}

FlatConfig RunConfig::to_flat() const {
    FlatConfig flat;
    flat.set("dataset.dir", experiment.dataset_dir.string());
    flat.set("out.dir", experiment.out_dir.string());
    flat.set("synth.seed", std::to_string(synth.seed));
    flat.set("synth.n_train", std::to_string(synth.n_train));
    flat.set("synth.n_val", std::to_string(synth.n_val));
    flat.set("synth.n_test", std::to_string(synth.n_test));
    flat.set("synth.shape", std::to_string(synth.shape[0]) + "x" + std::to_string(synth.shape[1]) +
                                "x" + std::to_string(synth.shape[2]));
    flat.set("synth.class_distribution",
             join_doubles({synth.class_distribution.begin(), synth.class_distribution.end()}));
    flat.set("synth.label_noise", synth.label_noise ? "true" : "false");

    const GuidelineNetConfig& t = experiment.teacher;
    flat.set("teacher.encoder_layers", std::to_string(t.encoder_layers));
    flat.set("teacher.encoder_dim", std::to_string(t.encoder_dim));
    flat.set("teacher.encoder_heads", std::to_string(t.encoder_heads));
    flat.set("teacher.decoder_layers", std::to_string(t.decoder_layers));
    flat.set("teacher.decoder_dim", std::to_string(t.decoder_dim));
    flat.set("teacher.decoder_heads", std::to_string(t.decoder_heads));
    flat.set("teacher.vocab_size", std::to_string(t.vocab_size));
    flat.set("teacher.max_seq_len", std::to_string(t.max_seq_len));
    flat.set("teacher.patch_k", std::to_string(t.patch_k));
    flat.set("teacher.patch_depth", std::to_string(t.patch_depth));
    flat.set("teacher.seed", std::to_string(experiment.teacher_seed));

    schedule_to_flat(flat, "stage1", experiment.stage1);
    schedule_to_flat(flat, "stage2", experiment.stage2);
    schedule_to_flat(flat, "student", experiment.student);

    flat.set("loss.alpha", format_exact(experiment.loss.alpha));
    flat.set("loss.temperature", format_exact(experiment.loss.temperature));
    flat.set("loss.gamma", format_exact(experiment.loss.focal.gamma));
    flat.set("loss.class_weights", join_doubles({experiment.loss.focal.class_weights.begin(),
                                                 experiment.loss.focal.class_weights.end()}));

    flat.set("backbone", backbone);
    std::string backbones;
    for (size_t i = 0; i < experiment.backbones.size(); ++i) {
        if (i) backbones += ",";
        backbones += experiment.backbones[i];
    }
    flat.set("backbones", backbones);
    std::string seeds;
    for (size_t i = 0; i < experiment.seeds.size(); ++i) {
        if (i) seeds += ",";
        seeds += std::to_string(experiment.seeds[i]);
    }
    flat.set("seeds", seeds);
    flat.set("alphas", join_doubles(alphas));
    flat.set("eval.split", split_name(experiment.eval_split));
    flat.set("suite.include_baseline_mllm",
             experiment.include_baseline_mllm ? "true" : "false");
    return flat;
}

}  // namespace picg
