#include "picg/guideline_network.hpp"

#include <cmath>
#include <sstream>

namespace picg {

void GuidelineNetConfig::validate() const {
    if (encoder_dim % encoder_heads != 0 || decoder_dim % decoder_heads != 0)
        throw config_error("model dims must be divisible by head counts");
    if (encoder_layers < 1 || decoder_layers < 1)
        throw config_error("layer counts must be positive");
    if (max_seq_len < 8) throw config_error("max_seq_len too small");
    if (patch_k < 1 || patch_depth < 1) throw config_error("patch kernel must be positive");
}

int GuidelineNetConfig::resolved_vocab_size() const {
    return vocab_size > 0 ? vocab_size : Vocabulary::builtin().size();
}

std::string GuidelineNetConfig::digest() const {
    std::ostringstream os;
    os << encoder_layers << "," << encoder_dim << "," << encoder_heads << "," << decoder_layers
       << "," << decoder_dim << "," << decoder_heads << "," << resolved_vocab_size() << ","
       << max_seq_len << "," << patch_k << "," << patch_depth;
    const std::string s = os.str();
    return hex64(fnv1a64(s.data(), s.size()));
}

std::function<bool(const std::string&)> trainable_predicate(TrainStage stage) {
    return [stage](const std::string& name) {
        const bool decoder_bias =
            name.rfind("decoder.", 0) == 0 && name.size() >= 5 &&
            name.compare(name.size() - 5, 5, ".bias") == 0;
        const bool projection = name.rfind("proj.", 0) == 0;
        if (stage == TrainStage::Stage1)
            return is_adapter_param(name) || projection || decoder_bias;
        return projection || decoder_bias;
    };
}

bool is_adapter_param(const std::string& name) { return name.rfind("adapter.", 0) == 0; }

Tensor sinusoidal_positions(int64_t n, int64_t dim) {
    Tensor pe({n, dim});
    for (int64_t pos = 0; pos < n; ++pos)
        for (int64_t i = 0; i < dim; i += 2) {
            const double angle = double(pos) / std::pow(10000.0, double(i) / double(dim));
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
        }
    return pe;
}

namespace {

Tensor causal_mask(int64_t n) {
    Tensor mask({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) mask.at(i, j) = -1e30;
    return mask;
}

}  // namespace

GuidelineNetwork::GuidelineNetwork(GuidelineNetConfig config, uint64_t init_seed)
    : config_(std::move(config)) {
    config_.validate();
    Rng rng(init_seed);
    const int ed = config_.encoder_dim, dd = config_.decoder_dim;
    const int v = config_.resolved_vocab_size();
    const int k = config_.patch_k, kd = config_.patch_depth;

    auto add_linear = [&](const std::string& prefix, int out, int in, double stddev,
                          double bias_stddev = 0.0) {
        params_.add(prefix + ".weight", Tensor::randn({out, in}, rng, stddev));
        params_.add(prefix + ".bias", bias_stddev > 0.0
                                          ? Tensor::randn({out}, rng, bias_stddev)
                                          : Tensor({out}));
    };
    auto add_norm = [&](const std::string& prefix, int dim) {
        Tensor gain({dim});
        gain.fill(1.0);
        params_.add(prefix + ".gain", std::move(gain));
        params_.add(prefix + ".bias", Tensor({dim}));
    };
    auto add_block = [&](const std::string& prefix, int dim) {
        const double attn_std = 1.0 / std::sqrt(double(dim));
        // MLP thresholds are drawn at random so the frozen blocks expose a
        // diverse bank of saturating features, not a near-linear map.
        add_norm(prefix + ".ln1", dim);
        add_linear(prefix + ".attn.wq", dim, dim, attn_std);
        add_linear(prefix + ".attn.wk", dim, dim, attn_std);
        add_linear(prefix + ".attn.wv", dim, dim, attn_std);
        add_linear(prefix + ".attn.wo", dim, dim, attn_std);
        add_norm(prefix + ".ln2", dim);
        add_linear(prefix + ".mlp.fc1", 4 * dim, dim, attn_std, 0.7);
        add_linear(prefix + ".mlp.fc2", dim, 4 * dim, 1.0 / std::sqrt(4.0 * dim));
    };

    params_.add("adapter.kernel",
                Tensor::randn({ed, 1, kd, k, k}, rng, 1.0 / std::sqrt(double(kd) * k * k)));
    params_.add("adapter.bias", Tensor({ed}));
    for (int l = 0; l < config_.encoder_layers; ++l)
        add_block("encoder." + std::to_string(l), ed);
    add_norm("encoder.ln_f", ed);
    add_linear("proj", dd, ed, 1.0 / std::sqrt(double(ed)));
    params_.add("decoder.tok_emb", Tensor::randn({v, dd}, rng, 0.02));
    params_.add("decoder.pos_emb", Tensor::randn({config_.max_seq_len, dd}, rng, 0.02));
    for (int l = 0; l < config_.decoder_layers; ++l)
        add_block("decoder." + std::to_string(l), dd);
    add_norm("decoder.ln_f", dd);
    add_linear("decoder.lm_head", v, dd, 0.02);

    img_pos_ = sinusoidal_positions(config_.max_seq_len, dd);
    enc_pos_ = sinusoidal_positions(config_.max_seq_len, ed);
}

int64_t GuidelineNetwork::tokens_per_volume(const std::array<int, 3>& shape) const {
    const int kd = config_.patch_depth, k = config_.patch_k;
    if (shape[0] % kd != 0 || shape[1] % k != 0 || shape[2] % k != 0)
        throw shape_error("volume " + std::to_string(shape[0]) + "x" + std::to_string(shape[1]) +
                          "x" + std::to_string(shape[2]) + " not divisible by patch kernel " +
                          std::to_string(kd) + "x" + std::to_string(k) + "x" + std::to_string(k));
    return int64_t(shape[0] / kd) * (shape[1] / k) * (shape[2] / k);
}

Var GuidelineNetwork::attention_block(const Var& x, const std::string& prefix, int heads,
                                      bool causal) const {
    const int64_t dim = x->value.cols();
    const int64_t dh = dim / heads;
    const int64_t n = x->value.rows();

    Var h = x;
    Var normed = layer_norm(h, params_.find(prefix + ".ln1.gain"),
                            params_.find(prefix + ".ln1.bias"));
    Var q = linear(normed, params_.find(prefix + ".attn.wq.weight"),
                   params_.find(prefix + ".attn.wq.bias"));
    Var k = linear(normed, params_.find(prefix + ".attn.wk.weight"),
                   params_.find(prefix + ".attn.wk.bias"));
    Var v = linear(normed, params_.find(prefix + ".attn.wv.weight"),
                   params_.find(prefix + ".attn.wv.bias"));

    Tensor mask = causal ? causal_mask(n) : Tensor();
    std::vector<Var> head_outputs;
    head_outputs.reserve(size_t(heads));
    for (int hd = 0; hd < heads; ++hd) {
        Var qh = slice_cols(q, hd * dh, (hd + 1) * dh);
        Var kh = slice_cols(k, hd * dh, (hd + 1) * dh);
        Var vh = slice_cols(v, hd * dh, (hd + 1) * dh);
        Var scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
        if (causal) scores = add_const(scores, mask);
        Var attn = row_softmax(scores);
        head_outputs.push_back(matmul(attn, vh));
    }
    Var merged = concat_cols(head_outputs);
    Var attn_out = linear(merged, params_.find(prefix + ".attn.wo.weight"),
                          params_.find(prefix + ".attn.wo.bias"));
    h = add(h, attn_out);

    Var normed2 = layer_norm(h, params_.find(prefix + ".ln2.gain"),
                             params_.find(prefix + ".ln2.bias"));
    Var m = linear(normed2, params_.find(prefix + ".mlp.fc1.weight"),
                   params_.find(prefix + ".mlp.fc1.bias"));
    m = gelu(m);
    m = linear(m, params_.find(prefix + ".mlp.fc2.weight"),
               params_.find(prefix + ".mlp.fc2.bias"));
    return add(h, m);
}

Var GuidelineNetwork::encode_volume(const Volume& volume) const {
    const int64_t n_tokens = tokens_per_volume(volume.shape);
    const int kd = config_.patch_depth, k = config_.patch_k;
    const int64_t patch_elems = int64_t(kd) * k * k;
    const int D = volume.shape[0], H = volume.shape[1], W = volume.shape[2];
    const int gd = D / kd, gh = H / k, gw = W / k;

    // Patch extraction is pure data movement; it happens outside the graph
    // and the adapter runs as a linear map over flattened patches.
    Tensor patches({n_tokens, patch_elems});
    int64_t t = 0;
    for (int bz = 0; bz < gd; ++bz)
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx, ++t) {
                double* dst = patches.data() + t * patch_elems;
                int64_t e = 0;
                for (int dz = 0; dz < kd; ++dz)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx, ++e)
                            dst[e] = double(volume.at(bz * kd + dz, by * k + dy, bx * k + dx));
            }

    Var x = make_constant(std::move(patches));
    Var kernel_flat = reshape(params_.find("adapter.kernel"),
                              {int64_t(config_.encoder_dim), patch_elems});
    Var tokens = linear(x, kernel_flat, params_.find("adapter.bias"));

    Tensor pe({n_tokens, config_.encoder_dim});
    for (int64_t i = 0; i < n_tokens; ++i)
        for (int64_t j = 0; j < config_.encoder_dim; ++j) pe.at(i, j) = enc_pos_.at(i, j);
    Var h = add_const(tokens, std::move(pe));

    for (int l = 0; l < config_.encoder_layers; ++l)
        h = attention_block(h, "encoder." + std::to_string(l), config_.encoder_heads, false);
    h = layer_norm(h, params_.find("encoder.ln_f.gain"), params_.find("encoder.ln_f.bias"));
    return linear(h, params_.find("proj.weight"), params_.find("proj.bias"));
}

Var GuidelineNetwork::encode_visual_prompt(const std::map<SequenceKind, Volume>& volumes) const {
    if (volumes.empty()) throw shape_error("encode_visual_prompt: no volumes");
    std::vector<Var> parts;
    for (SequenceKind kind : kAllKinds) {
        const auto it = volumes.find(kind);
        if (it != volumes.end()) parts.push_back(encode_volume(it->second));
    }
    if (parts.size() != volumes.size())
        throw domain_error("encode_visual_prompt: unexpected sequence kind present");
    return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

Var GuidelineNetwork::decoder_input(const std::vector<int>& text_ids, const Var& prompt) const {
    const int64_t n_img = prompt->value.rows();
    const int64_t n_text = int64_t(text_ids.size());
    const int64_t total = n_img + n_text;
    if (total > config_.max_seq_len)
        throw shape_error("sequence length " + std::to_string(total) + " exceeds max_seq_len " +
                          std::to_string(config_.max_seq_len));

    // Image positions: fixed sinusoidal. Text positions: learned, indexed by
    // absolute position.
    Tensor img_pe({n_img, config_.decoder_dim});
    for (int64_t i = 0; i < n_img; ++i)
        for (int64_t j = 0; j < config_.decoder_dim; ++j) img_pe.at(i, j) = img_pos_.at(i, j);
    Var img_part = add_const(prompt, std::move(img_pe));

    Var tok = embedding_rows(params_.find("decoder.tok_emb"), text_ids);
    Var pos = slice_rows(params_.find("decoder.pos_emb"), n_img, total);
    Var text_part = add(tok, pos);

    return concat_rows({img_part, text_part});
}

// Returns (pre-norm residual stream, normalized trunk output). The residual
// stream is the "final decoder layer" hidden state; the normalized output
// feeds the LM head.
std::pair<Var, Var> GuidelineNetwork::decoder_trunk(const Var& embeddings) const {
    Var h = embeddings;
    for (int l = 0; l < config_.decoder_layers; ++l)
        h = attention_block(h, "decoder." + std::to_string(l), config_.decoder_heads, true);
    Var normed = layer_norm(h, params_.find("decoder.ln_f.gain"),
                            params_.find("decoder.ln_f.bias"));
    return {h, normed};
}

GuidelineNetwork::Forward GuidelineNetwork::forward_teacher(const InstructionRecord& record,
                                                            const Var& prompt) const {
    const Vocabulary& vocab = Vocabulary::builtin();
    const std::vector<int> prompt_ids = vocab.tokenize(record.prompt);
    const std::vector<int> target_ids = vocab.tokenize(record.target);

    std::vector<int> text_ids;
    text_ids.reserve(1 + prompt_ids.size() + target_ids.size());
    text_ids.push_back(Vocabulary::kBosId);
    text_ids.insert(text_ids.end(), prompt_ids.begin(), prompt_ids.end());
    text_ids.insert(text_ids.end(), target_ids.begin(), target_ids.end());

    const int64_t n_img = prompt->value.rows();
    auto [residual, normed] = decoder_trunk(decoder_input(text_ids, prompt));
    Var logits = linear(normed, params_.find("decoder.lm_head.weight"),
                        params_.find("decoder.lm_head.bias"));

    Forward fwd;
    fwd.logits = logits;
    fwd.hidden = residual;
    fwd.n_img = int(n_img);
    const int64_t total = n_img + int64_t(text_ids.size());
    fwd.next_ids.assign(size_t(total), Vocabulary::kPadId);
    fwd.supervised.assign(size_t(total), 0);
    for (int64_t i = 0; i + 1 < total; ++i)
        fwd.next_ids[size_t(i)] = i + 1 < n_img ? Vocabulary::kImgId
                                                : text_ids[size_t(i + 1 - n_img)];
    fwd.next_ids[size_t(total - 1)] = Vocabulary::kEosId;
    if (!target_ids.empty()) {
        // Predict the first target token from the last prompt position, the
        // rest autoregressively, and the end token after the target.
        const int64_t first = n_img + int64_t(prompt_ids.size());
        for (int64_t i = first; i < total; ++i) fwd.supervised[size_t(i)] = 1;
    }
    return fwd;
}

Var GuidelineNetwork::caption_loss(const Forward& forward) const {
    return cross_entropy_mean(forward.logits, forward.next_ids, forward.supervised);
}

std::vector<double> GuidelineNetwork::extract_picg_features(const InstructionRecord& record,
                                                            const Var& prompt) const {
    const Vocabulary& vocab = Vocabulary::builtin();
    std::vector<int> text_ids;
    const std::vector<int> prompt_ids = vocab.tokenize(record.prompt);
    text_ids.push_back(Vocabulary::kBosId);
    text_ids.insert(text_ids.end(), prompt_ids.begin(), prompt_ids.end());

    const Var residual = decoder_trunk(decoder_input(text_ids, prompt)).first;
    const Tensor& hidden = residual->value;
    std::vector<double> feature(size_t(config_.decoder_dim), 0.0);
    for (int64_t i = 0; i < hidden.rows(); ++i)
        for (int64_t j = 0; j < hidden.cols(); ++j) feature[size_t(j)] += hidden.at(i, j);
    for (auto& v : feature) v /= double(hidden.rows());
    return feature;
}

std::string GuidelineNetwork::generate_caption(const InstructionRecord& record,
                                               const Var& prompt, int max_new) const {
    const Vocabulary& vocab = Vocabulary::builtin();
    std::vector<int> text_ids;
    const std::vector<int> prompt_ids = vocab.tokenize(record.prompt);
    text_ids.push_back(Vocabulary::kBosId);
    text_ids.insert(text_ids.end(), prompt_ids.begin(), prompt_ids.end());

    std::vector<int> generated;
    for (int step = 0; step < max_new; ++step) {
        if (int64_t(prompt->value.rows()) + int64_t(text_ids.size()) >= config_.max_seq_len)
            break;
        Var normed = decoder_trunk(decoder_input(text_ids, prompt)).second;
        Var logits = linear(normed, params_.find("decoder.lm_head.weight"),
                            params_.find("decoder.lm_head.bias"));
        const int64_t last = logits->value.rows() - 1;
        const double* row = logits->value.data() + last * logits->value.cols();
        int best = 0;
        for (int j = 1; j < int(logits->value.cols()); ++j)
            if (row[j] > row[best]) best = j;
        if (best == Vocabulary::kEosId) break;
        generated.push_back(best);
        text_ids.push_back(best);
    }
    return vocab.detokenize(generated);
}

}  // namespace picg
