#include "picg/instructions.hpp"

#include <sstream>

#include "picg/serialize.hpp"

namespace picg {

namespace {

const char* score_word(int score) {
    switch (score) {
        case 1: return "one";
        case 2: return "two";
        case 3: return "three";
        case 4: return "four";
        case 5: return "five";
        default: throw domain_error("score out of range: " + std::to_string(score));
    }
}

std::string builtin_section(int score) {
    return std::string("category ") + score_word(score) + " : " + criterion_phrase(score) + " .";
}

constexpr const char* kStage1Prompt =
    "instruction : state which sequence the attached volume shows . T2W volumes show bright "
    "anatomy with high signal . ADC and DWI volumes show diffusion contrast with lower signal . "
    "answer with T2W or ADC&DWI . response :";

constexpr const char* kStage2Template =
    "instruction : grade by the guideline . {guideline_sections} describe the lesion in the "
    "attached volumes according to the guideline . response :";

constexpr const char* kSectionsPlaceholder = "{guideline_sections}";

}  // namespace

const std::string& GuidelineRegistry::section(int score) const {
    if (score < 1 || score > 5)
        throw domain_error("score out of range: " + std::to_string(score));
    return sections[size_t(score - 1)];
}

void GuidelineRegistry::validate() const {
    for (int s = 1; s <= 5; ++s) {
        if (section(s).empty())
            throw config_error("guideline section " + std::to_string(s) + " is empty");
        for (int t = s + 1; t <= 5; ++t)
            if (section(s) == section(t))
                throw config_error("guideline sections " + std::to_string(s) + " and " +
                                   std::to_string(t) + " are identical");
    }
}

GuidelineRegistry GuidelineRegistry::builtin() {
    GuidelineRegistry reg;
    reg.version = kRuleTableVersion;
    for (int s = 1; s <= 5; ++s) reg.sections[size_t(s - 1)] = builtin_section(s);
    return reg;
}

GuidelineRegistry GuidelineRegistry::load(const std::filesystem::path& file) {
    GuidelineRegistry reg;
    std::istringstream is(read_text_file(file));
    std::string line;
    std::array<bool, 5> seen = {false, false, false, false, false};
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.find(": ");
        if (pos == std::string::npos)
            throw config_error("malformed guideline registry line: " + line);
        const std::string key = line.substr(0, pos);
        const std::string value = line.substr(pos + 2);
        if (key == "version") {
            reg.version = value;
        } else if (key.size() == 1 && key[0] >= '1' && key[0] <= '5') {
            const int s = key[0] - '0';
            reg.sections[size_t(s - 1)] = value;
            seen[size_t(s - 1)] = true;
        } else {
            throw config_error("unknown guideline registry key: " + key);
        }
    }
    for (int s = 1; s <= 5; ++s)
        if (!seen[size_t(s - 1)])
            throw config_error("guideline registry missing score " + std::to_string(s));
    reg.validate();
    return reg;
}

void GuidelineRegistry::save(const std::filesystem::path& file) const {
    std::ostringstream os;
    os << "version: " << version << "\n";
    for (int s = 1; s <= 5; ++s) os << s << ": " << section(s) << "\n";
    write_text_file(file, os.str());
}

InstructionTemplates InstructionTemplates::builtin() {
    return InstructionTemplates{kStage1Prompt, kStage2Template};
}

InstructionTemplates InstructionTemplates::load(const std::filesystem::path& dir) {
    InstructionTemplates t;
    t.stage1_prompt = read_text_file(dir / "stage1_prompt.txt");
    t.stage2_template = read_text_file(dir / "stage2_prompt.txt");
    // Trim one trailing newline so editors that append it do not leak tokens.
    for (std::string* s : {&t.stage1_prompt, &t.stage2_template})
        while (!s->empty() && s->back() == '\n') s->pop_back();
    if (t.stage2_template.find(kSectionsPlaceholder) == std::string::npos)
        throw config_error("stage2_prompt.txt must contain " +
                           std::string(kSectionsPlaceholder));
    return t;
}

void InstructionTemplates::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "stage1_prompt.txt", stage1_prompt + "\n");
    write_text_file(dir / "stage2_prompt.txt", stage2_template + "\n");
}

InstructionRecord render_stage1(SequenceKind kind) {
    return render_stage1(InstructionTemplates::builtin(), kind);
}

InstructionRecord render_stage1(const InstructionTemplates& templates, SequenceKind kind) {
    InstructionRecord rec;
    rec.stage = InstructionStage::SequenceDiscrimination;
    rec.prompt = templates.stage1_prompt;
    rec.target = stage1_target(kind);
    return rec;
}

InstructionRecord render_stage2(const GuidelineRegistry& registry, const Sample& sample) {
    return render_stage2(InstructionTemplates::builtin(), registry, sample);
}

InstructionRecord render_stage2(const InstructionTemplates& templates,
                                const GuidelineRegistry& registry, const Sample& sample) {
    registry.validate();
    if (sample.caption.empty())
        throw domain_error("sample " + sample.id + " has no caption");
    std::string sections;
    for (int s = 1; s <= 5; ++s) {
        if (s > 1) sections += " ";
        sections += registry.section(s);
    }
    std::string prompt = templates.stage2_template;
    const auto pos = prompt.find(kSectionsPlaceholder);
    if (pos == std::string::npos)
        throw config_error("stage-2 template lacks the guideline placeholder");
    prompt.replace(pos, std::string(kSectionsPlaceholder).size(), sections);

    InstructionRecord rec;
    rec.stage = InstructionStage::GuidelineCaptioning;
    rec.prompt = std::move(prompt);
    rec.target = sample.caption;
    return rec;
}

Vocabulary::Vocabulary(const std::vector<std::string>& corpus) {
    for (const std::string& text : corpus) {
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) {
            std::istringstream ws(line);
            std::string word;
            while (ws >> word) {
                if (index_.count(word)) continue;
                index_[word] = kWordBase + int(words_.size());
                words_.push_back(word);
            }
        }
    }
    if (size() > 512)
        throw config_error("vocabulary exceeds the 512-token budget: " +
                           std::to_string(size()));
}

const Vocabulary& Vocabulary::builtin() {
    static const Vocabulary vocab = [] {
        std::vector<std::string> corpus;
        const InstructionTemplates templates = InstructionTemplates::builtin();
        corpus.push_back(templates.stage1_prompt);
        corpus.push_back(templates.stage2_template);
        const GuidelineRegistry registry = GuidelineRegistry::builtin();
        for (int s = 1; s <= 5; ++s) corpus.push_back(registry.section(s));
        for (SequenceKind kind : kAllKinds) corpus.push_back(stage1_target(kind));
        // Caption scaffold at every score; attribute numbers use byte
        // fallback regardless of their value.
        LesionAttributes attrs;
        corpus.push_back(render_caption(1, attrs));
        attrs.diameter_voxels = 12.0;
        attrs.contrast = 0.5;
        attrs.shape_irregularity = 0.5;
        for (int s = 2; s <= 5; ++s) corpus.push_back(render_caption(s, attrs));
        return Vocabulary(corpus);
    }();
    return vocab;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    std::vector<int> ids;
    size_t line_start = 0;
    bool first_line = true;
    while (line_start <= text.size()) {
        size_t line_end = text.find('\n', line_start);
        const bool last_line = line_end == std::string::npos;
        if (last_line) line_end = text.size();
        if (!first_line) ids.push_back(kNlId);
        first_line = false;

        const std::string line = text.substr(line_start, line_end - line_start);
        // Split the line into space-separated chunks; unknown chunks become
        // byte runs, and adjacent unknown chunks merge with literal 0x20
        // bytes so chunk boundaries stay recoverable.
        std::vector<std::string> chunks;
        size_t pos = 0;
        while (pos <= line.size()) {
            size_t sp = line.find(' ', pos);
            if (sp == std::string::npos) sp = line.size();
            chunks.push_back(line.substr(pos, sp - pos));
            pos = sp + 1;
            if (sp == line.size()) break;
        }
        if (!(chunks.size() == 1 && chunks[0].empty())) {
            bool prev_bytes = false;
            for (size_t c = 0; c < chunks.size(); ++c) {
                const std::string& chunk = chunks[c];
                if (chunk.empty()) {
                    ids.push_back(kSpId);
                    prev_bytes = false;
                    continue;
                }
                const auto it = index_.find(chunk);
                if (it != index_.end()) {
                    ids.push_back(it->second);
                    prev_bytes = false;
                } else {
                    if (prev_bytes) ids.push_back(kByteBase + int(' '));
                    for (unsigned char ch : chunk) ids.push_back(kByteBase + int(ch));
                    prev_bytes = true;
                }
            }
        }
        if (last_line) break;
        line_start = line_end + 1;
    }
    return ids;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
    std::string out;
    bool line_has_chunk = false;  // a chunk already emitted on this line
    bool in_byte_run = false;
    auto begin_chunk = [&] {
        if (line_has_chunk) out += ' ';
        line_has_chunk = true;
    };
    for (int id : ids) {
        if (id == kEosId) break;
        if (id == kPadId || id == kBosId || id == kImgId) continue;
        if (id == kNlId) {
            out += '\n';
            line_has_chunk = false;
            in_byte_run = false;
        } else if (id == kSpId) {
            begin_chunk();
            in_byte_run = false;
        } else if (id >= kByteBase && id < kWordBase) {
            if (!in_byte_run) begin_chunk();
            out += char(id - kByteBase);
            in_byte_run = true;
        } else if (id >= kWordBase && id < size()) {
            begin_chunk();
            out += words_[size_t(id - kWordBase)];
            in_byte_run = false;
        }
        // Unknown ids are skipped; detokenize stays total.
    }
    return out;
}

}  // namespace picg
