#pragma once

#include <optional>
#include <string>
#include <vector>

namespace minitts::textproc {

struct TextToken {
  int symbol_id = 0;
  int lang_id = 0;
};

enum class SpecialKind { BT, BA, EOP, BOS, EOS, PAD, LidOpen, LidClose };

// Shared multilingual symbol vocabulary plus the special-token id block.
// Special ids live in their own id space, disjoint from symbol ids by
// construction (they index a separate embedding table downstream).
class Vocabulary {
 public:
  static Vocabulary load(const std::string& json_path);
  static Vocabulary from_json_text(const std::string& json_text);

  int symbol_id(char symbol) const;  // throws OovError-style invalid_argument
  char symbol_of(int id) const;
  bool contains(char symbol) const;
  int symbol_count() const { return static_cast<int>(id_to_symbol_.size()); }
  int num_languages() const { return num_languages_; }

  // special ids: fixed layout, one LID open/close pair per language
  int special_id(SpecialKind kind, int lang_id = 0) const;
  int special_count() const { return 6 + 2 * num_languages_; }

 private:
  std::vector<char> id_to_symbol_;
  std::vector<int> symbol_to_id_;  // indexed by char
  int num_languages_ = 2;
};

struct LangSpan {
  int start = 0;
  int end = 0;  // exclusive
  int lang_id = 0;
};

// lang_spans must cover `text` exactly, in order, without overlap
std::vector<TextToken> tokenize(const std::string& text, const std::vector<LangSpan>& lang_spans,
                                const Vocabulary& vocab);
std::string detokenize(const std::vector<TextToken>& tokens, const Vocabulary& vocab);

enum class Strategy { BoundaryAware, TokenConcat, InstructionGuided, Unconditioned };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

enum class Role { Cond, Dur, Special, Text, Instruction, Semantic };

struct LayoutEntry {
  Role role;
  int id = -1;       // symbol / special / semantic id depending on role
  int lang_id = -1;  // set for Text entries under TokenConcat; -1 elsewhere
};

struct T2SSequence {
  Strategy strategy;
  std::vector<LayoutEntry> layout;

  int ba_position() const;  // index of the BA special in layout
};

struct InstructionTemplates {
  // templates[lang_id] is the fixed per-language table; sampling picks
  // uniformly among them during training
  std::vector<std::vector<std::string>> templates;

  static InstructionTemplates load(const std::string& json_path);
  static InstructionTemplates from_json_text(const std::string& json_text);
  int count(int lang_id) const { return static_cast<int>(templates.at(lang_id).size()); }
};

constexpr int kRandomTemplate = -1;

T2SSequence assemble_boundary_aware(const std::vector<TextToken>& tokens, const Vocabulary& vocab);
T2SSequence assemble_token_concat(const std::vector<TextToken>& tokens, const Vocabulary& vocab);
// template_id == kRandomTemplate draws uniformly using rng_draw in [0,1)
T2SSequence assemble_instruction(const std::vector<TextToken>& tokens, const Vocabulary& vocab,
                                 const InstructionTemplates& table, int lang_id, int template_id,
                                 double rng_draw = 0.0);
// ablation layout: no language information at all
T2SSequence assemble_unconditioned(const std::vector<TextToken>& tokens, const Vocabulary& vocab);

// dispatch helper used by training/eval harnesses; instruction strategy uses
// the utterance's first token's lang when tokens are non-empty, else lang 0
T2SSequence assemble(Strategy s, const std::vector<TextToken>& tokens, const Vocabulary& vocab,
                     const InstructionTemplates* table = nullptr, int template_id = 0);

}  // namespace minitts::textproc
