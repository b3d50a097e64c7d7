#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "picg/data_synth.hpp"

namespace picg {

// Maps each score 1..5 to its guideline section text. Section texts embed
// the rule-table criterion phrases so captions and guideline text agree.
struct GuidelineRegistry {
    std::array<std::string, 5> sections;  // index 0 -> score 1
    std::string version;

    const std::string& section(int score) const;
    void validate() const;  // five non-empty, mutually distinct sections

    static GuidelineRegistry builtin();
    static GuidelineRegistry load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
};

// Editable prompt templates. The stage-2 template carries a
// {guideline_sections} placeholder that rendering fills with all five
// section texts.
struct InstructionTemplates {
    std::string stage1_prompt;
    std::string stage2_template;

    static InstructionTemplates builtin();
    static InstructionTemplates load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;
};

enum class InstructionStage { SequenceDiscrimination, GuidelineCaptioning };

struct InstructionRecord {
    InstructionStage stage = InstructionStage::SequenceDiscrimination;
    std::string prompt;
    std::string target;
};

// Stage-1 record: constant prompt asking which sequence the attached volume
// shows; target follows the {T2W} vs {ADC&DWI} grouping.
InstructionRecord render_stage1(SequenceKind kind);
InstructionRecord render_stage1(const InstructionTemplates& templates, SequenceKind kind);

// Stage-2 record: prompt embeds all five guideline sections (never a bare
// numeric label); target is the sample's caption.
InstructionRecord render_stage2(const GuidelineRegistry& registry, const Sample& sample);
InstructionRecord render_stage2(const InstructionTemplates& templates,
                                const GuidelineRegistry& registry, const Sample& sample);

// Word-level tokenizer over a closed synthetic vocabulary with byte
// fallback. detokenize(tokenize(t)) == t for every string. Reserved ids:
// pad, begin, end, image-prompt position, empty-chunk and newline markers,
// then 256 byte tokens, then the word list.
class Vocabulary {
  public:
    static constexpr int kPadId = 0;
    static constexpr int kBosId = 1;
    static constexpr int kEosId = 2;
    static constexpr int kImgId = 3;
    static constexpr int kSpId = 4;   // empty chunk (extra space)
    static constexpr int kNlId = 5;   // newline
    static constexpr int kByteBase = 6;
    static constexpr int kWordBase = kByteBase + 256;

    // Built from the shipped templates, registry and caption wording, so the
    // whole synthetic corpus tokenizes to words.
    static const Vocabulary& builtin();

    explicit Vocabulary(const std::vector<std::string>& corpus);

    int size() const { return kWordBase + int(words_.size()); }
    int word_count() const { return int(words_.size()); }

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace picg
