#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "picg/autodiff.hpp"
#include "picg/data_synth.hpp"
#include "picg/instructions.hpp"
#include "picg/ops.hpp"

namespace picg {

struct GuidelineNetConfig {
    int encoder_layers = 4;
    int encoder_dim = 128;
    int encoder_heads = 4;
    int decoder_layers = 4;
    int decoder_dim = 128;
    int decoder_heads = 4;
    int vocab_size = 0;  // 0 -> Vocabulary::builtin().size()
    int max_seq_len = 512;
    int patch_k = 4;
    int patch_depth = 4;

    void validate() const;
    std::string digest() const;
    int resolved_vocab_size() const;
};

// Which parameters train in each stage. Stage 1: domain adapter, projection
// and every decoder bias vector. Stage 2: the same minus the adapter. The
// encoder and decoder embeddings stay frozen throughout.
enum class TrainStage { Stage1, Stage2 };
std::function<bool(const std::string&)> trainable_predicate(TrainStage stage);

// Parameter-name predicates used by freeze-contract checks.
bool is_adapter_param(const std::string& name);

struct TeacherFeature {
    std::string sample_id;
    std::vector<double> vector;  // length decoder_dim
};

class GuidelineNetwork {
  public:
    GuidelineNetwork(GuidelineNetConfig config, uint64_t init_seed);

    const GuidelineNetConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    int64_t tokens_per_volume(const std::array<int, 3>& shape) const;

    // Adapter -> encoder -> projection for one volume: [n_tokens, dec_dim].
    Var encode_volume(const Volume& volume) const;

    // Multi-sequence visual prompt; per-volume token blocks concatenated in
    // T2W, ADC, DWI order.
    Var encode_visual_prompt(const std::map<SequenceKind, Volume>& volumes) const;

    struct Forward {
        Var logits;              // [L, V]
        Var hidden;              // [L, dec_dim] final-layer residual stream
        std::vector<int> next_ids;
        std::vector<char> supervised;
        int n_img = 0;
    };

    // Causal decoder pass over [image tokens][bos][prompt][target]; loss is
    // supervised on the target span plus the end token.
    Forward forward_teacher(const InstructionRecord& record, const Var& prompt) const;

    // Mean next-token cross-entropy over the supervised positions.
    Var caption_loss(const Forward& forward) const;

    // Mean of the final decoder layer's hidden states (the residual stream
    // before the output norm) over [image][bos][prompt]; the
    // guideline-conditioned feature vector. Deterministic, no sampling.
    std::vector<double> extract_picg_features(const InstructionRecord& record,
                                              const Var& prompt) const;

    // Greedy decoding until the end token or max_new tokens.
    std::string generate_caption(const InstructionRecord& record, const Var& prompt,
                                 int max_new) const;

  private:
    std::pair<Var, Var> decoder_trunk(const Var& embeddings) const;
    Var attention_block(const Var& x, const std::string& prefix, int heads,
                        bool causal) const;
    Var decoder_input(const std::vector<int>& text_ids, const Var& prompt) const;

    GuidelineNetConfig config_;
    ParamStore params_;
    Tensor img_pos_;  // sinusoidal table [max_seq_len, dec_dim]
    Tensor enc_pos_;  // sinusoidal table [max_seq_len, enc_dim]
};

// Sinusoidal position table [n, dim].
Tensor sinusoidal_positions(int64_t n, int64_t dim);

}  // namespace picg
