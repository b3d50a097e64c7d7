#include "picg/distill.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "picg/parallel.hpp"
#include "picg/serialize.hpp"

namespace picg {

namespace {
constexpr const char* kCacheMagic = "PICG-CACHE-1";
}

void FeatureCache::rebuild_index() const {
    if (!index_.empty()) return;
    for (size_t i = 0; i < ids.size(); ++i) index_[ids[i]] = i;
}

bool FeatureCache::has(const std::string& id) const {
    rebuild_index();
    return index_.count(id) > 0;
}

const double* FeatureCache::vector_of(const std::string& id) const {
    rebuild_index();
    const auto it = index_.find(id);
    if (it == index_.end())
        throw state_error("feature cache has no entry for sample " + id);
    return vectors.data() + int64_t(it->second) * feature_dim;
}

void FeatureCache::save(const std::filesystem::path& path) const {
    std::vector<float> blob;
    blob.reserve(size_t(vectors.numel()));
    for (int64_t i = 0; i < vectors.numel(); ++i) blob.push_back(float(vectors[i]));

    std::ostringstream blob_bytes;
    write_f32_le(blob_bytes, blob.data(), blob.size());
    const std::string payload = blob_bytes.str();

    nlohmann::ordered_json header;
    header["ids"] = ids;
    header["feature_dim"] = feature_dim;
    header["checksum"] = checksum;
    header["source_checkpoint_digest"] = source_checkpoint_digest;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os << kCacheMagic << "\n" << header.dump() << "\n" << payload;
    if (!os) throw io_error("write failed: " + path.string());
}

FeatureCache FeatureCache::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw state_error("feature cache not found: " + path.string());
    std::string magic, header_line;
    if (!std::getline(is, magic) || magic != kCacheMagic)
        throw load_error("not a feature cache file: " + path.string());
    if (!std::getline(is, header_line)) throw load_error("cache header missing: " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const std::exception& e) {
        throw load_error("cache header unreadable: " + path.string() + ": " + e.what());
    }

    FeatureCache cache;
    cache.ids = header.at("ids").get<std::vector<std::string>>();
    cache.feature_dim = header.at("feature_dim").get<int64_t>();
    cache.checksum = header.at("checksum").get<std::string>();
    cache.source_checkpoint_digest = header.at("source_checkpoint_digest").get<std::string>();

    const size_t count = cache.ids.size() * size_t(cache.feature_dim);
    const std::vector<float> blob = read_f32_le(is, count);

    std::ostringstream blob_bytes;
    write_f32_le(blob_bytes, blob.data(), blob.size());
    const std::string payload = blob_bytes.str();
    if (hex64(fnv1a64(payload.data(), payload.size())) != cache.checksum)
        throw load_error("feature cache checksum mismatch: " + path.string());

    cache.vectors = Tensor({int64_t(cache.ids.size()), cache.feature_dim});
    for (size_t i = 0; i < blob.size(); ++i) cache.vectors[int64_t(i)] = double(blob[i]);
    return cache;
}

FeatureCache build_feature_cache(GuidelineNetwork& teacher, const std::vector<Sample>& samples,
                                 const GuidelineRegistry& registry,
                                 const InstructionTemplates& templates,
                                 const std::string& source_checkpoint_digest) {
    // Inference only; freezing everything keeps the graphs gradient-free.
    teacher.params().set_trainable([](const std::string&) { return false; });

    FeatureCache cache;
    cache.feature_dim = teacher.config().decoder_dim;
    cache.source_checkpoint_digest = source_checkpoint_digest;
    cache.ids.reserve(samples.size());
    for (const Sample& sample : samples) cache.ids.push_back(sample.id);
    cache.vectors = Tensor({int64_t(samples.size()), cache.feature_dim});

    parallel_for(int64_t(samples.size()), [&](int64_t i) {
        const Sample& sample = samples[size_t(i)];
        const InstructionRecord record = render_stage2(templates, registry, sample);
        const Var prompt = teacher.encode_visual_prompt(sample.volumes);
        const std::vector<double> feature = teacher.extract_picg_features(record, prompt);
        if (int64_t(feature.size()) != cache.feature_dim)
            throw state_error("teacher feature dimension drift for sample " + sample.id);
        double* dst = cache.vectors.data() + i * cache.feature_dim;
        for (size_t j = 0; j < feature.size(); ++j) dst[j] = feature[j];
    });

    std::vector<float> blob;
    blob.reserve(size_t(cache.vectors.numel()));
    for (int64_t i = 0; i < cache.vectors.numel(); ++i) blob.push_back(float(cache.vectors[i]));
    std::ostringstream blob_bytes;
    write_f32_le(blob_bytes, blob.data(), blob.size());
    const std::string payload = blob_bytes.str();
    cache.checksum = hex64(fnv1a64(payload.data(), payload.size()));
    return cache;
}

AlignmentHead::AlignmentHead(int teacher_dim, int student_dim, uint64_t seed)
    : teacher_dim_(teacher_dim) {
    Rng rng(seed);
    params_.add("align.weight", Tensor::randn({teacher_dim, student_dim}, rng,
                                              1.0 / std::sqrt(double(student_dim))));
    params_.add("align.bias", Tensor({teacher_dim}));
}

Var AlignmentHead::apply(const Var& student_feature) const {
    return linear(student_feature, params_.find("align.weight"), params_.find("align.bias"));
}

void LossConfig::validate() const {
    if (alpha < 0.0) throw config_error("loss alpha must be non-negative");
    if (temperature <= 0.0) throw config_error("loss temperature must be positive");
    focal.validate();
}

Var kl_feature_loss(const std::vector<double>& teacher_feature, const Var& student_feature,
                    const AlignmentHead& head, double temperature) {
    if (int64_t(teacher_feature.size()) != head.teacher_dim())
        throw shape_error("teacher feature dim " + std::to_string(teacher_feature.size()) +
                          " does not match alignment head dim " +
                          std::to_string(head.teacher_dim()));
    const std::vector<double> p =
        softmax_values(teacher_feature.data(), int(teacher_feature.size()), temperature);
    Var aligned = head.apply(student_feature);
    return kl_from_teacher(p, aligned, temperature);
}

double kl_feature_loss_value(const std::vector<double>& teacher_feature,
                             const std::vector<double>& student_feature,
                             const AlignmentHead& head, double temperature) {
    Tensor s({1, int64_t(student_feature.size())});
    for (size_t i = 0; i < student_feature.size(); ++i) s[int64_t(i)] = student_feature[i];
    Var feature = make_constant(std::move(s));
    return kl_feature_loss(teacher_feature, feature, head, temperature)->value[0];
}

double combined_objective(double classification_loss, double kl_loss, const LossConfig& config) {
    config.validate();
    if (!std::isfinite(classification_loss) || !std::isfinite(kl_loss))
        throw domain_error("combined objective requires finite losses");
    return classification_loss + config.alpha * kl_loss;
}

}  // namespace picg
