#include "minitts/textproc/textproc.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace minitts::textproc {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  json j;
  is >> j;
  return j;
}

}  // namespace

Vocabulary Vocabulary::load(const std::string& json_path) {
  std::ifstream is(json_path);
  if (!is) throw std::runtime_error("cannot open vocabulary file " + json_path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_text(ss.str());
}

Vocabulary Vocabulary::from_json_text(const std::string& json_text) {
  json j = json::parse(json_text);
  Vocabulary v;
  v.num_languages_ = j.at("num_languages").get<int>();
  const auto& symbols = j.at("symbols");
  v.id_to_symbol_.resize(symbols.size(), '\0');
  v.symbol_to_id_.assign(256, -1);
  for (auto it = symbols.begin(); it != symbols.end(); ++it) {
    const std::string& key = it.key();
    if (key.size() != 1) throw std::runtime_error("vocabulary symbols must be single characters: " + key);
    int id = it.value().get<int>();
    if (id < 0 || id >= static_cast<int>(symbols.size())) throw std::runtime_error("vocabulary id out of range");
    v.id_to_symbol_[id] = key[0];
    v.symbol_to_id_[static_cast<unsigned char>(key[0])] = id;
  }
  if (j.contains("specials")) {
    // the specials block is the on-disk contract; make sure it agrees with
    // the fixed id layout used everywhere else
    const auto& sp = j.at("specials");
    auto expect = [&](const std::string& name, SpecialKind kind, int lang) {
      if (sp.contains(name) && sp.at(name).get<int>() != v.special_id(kind, lang)) {
        throw std::runtime_error("vocabulary specials block disagrees on " + name);
      }
    };
    expect("BT", SpecialKind::BT, 0);
    expect("BA", SpecialKind::BA, 0);
    expect("EOP", SpecialKind::EOP, 0);
    expect("BOS", SpecialKind::BOS, 0);
    expect("EOS", SpecialKind::EOS, 0);
    expect("PAD", SpecialKind::PAD, 0);
    for (int lang = 0; lang < v.num_languages_; ++lang) {
      expect("LID_OPEN_" + std::to_string(lang), SpecialKind::LidOpen, lang);
      expect("LID_CLOSE_" + std::to_string(lang), SpecialKind::LidClose, lang);
    }
  }
  return v;
}

int Vocabulary::symbol_id(char symbol) const {
  int id = symbol_to_id_[static_cast<unsigned char>(symbol)];
  if (id < 0) {
    throw std::invalid_argument(std::string("OOV symbol '") + symbol + "'");
  }
  return id;
}

char Vocabulary::symbol_of(int id) const {
  if (id < 0 || id >= static_cast<int>(id_to_symbol_.size())) throw std::invalid_argument("symbol id out of range");
  return id_to_symbol_[id];
}

bool Vocabulary::contains(char symbol) const { return symbol_to_id_[static_cast<unsigned char>(symbol)] >= 0; }

int Vocabulary::special_id(SpecialKind kind, int lang_id) const {
  switch (kind) {
    case SpecialKind::BT: return 0;
    case SpecialKind::BA: return 1;
    case SpecialKind::EOP: return 2;
    case SpecialKind::BOS: return 3;
    case SpecialKind::EOS: return 4;
    case SpecialKind::PAD: return 5;
    case SpecialKind::LidOpen:
    case SpecialKind::LidClose: break;
  }
  if (lang_id < 0 || lang_id >= num_languages_) throw std::invalid_argument("special_id: lang_id out of range");
  int base = 6 + 2 * lang_id;
  return kind == SpecialKind::LidOpen ? base : base + 1;
}

std::vector<TextToken> tokenize(const std::string& text, const std::vector<LangSpan>& lang_spans,
                                const Vocabulary& vocab) {
  int cursor = 0;
  std::vector<TextToken> out;
  out.reserve(text.size());
  for (const LangSpan& span : lang_spans) {
    if (span.start != cursor || span.end < span.start || span.end > static_cast<int>(text.size())) {
      throw std::invalid_argument("lang_spans must cover the text in order without gaps or overlap");
    }
    if (span.lang_id < 0 || span.lang_id >= vocab.num_languages()) {
      throw std::invalid_argument("lang span has invalid lang_id");
    }
    for (int i = span.start; i < span.end; ++i) {
      char c = text[static_cast<std::size_t>(i)];
      if (!vocab.contains(c)) {
        throw std::invalid_argument(std::string("OOV symbol '") + c + "' at offset " + std::to_string(i));
      }
      out.push_back({vocab.symbol_id(c), span.lang_id});
    }
    cursor = span.end;
  }
  if (cursor != static_cast<int>(text.size())) {
    throw std::invalid_argument("lang_spans must cover the text in order without gaps or overlap");
  }
  return out;
}

std::string detokenize(const std::vector<TextToken>& tokens, const Vocabulary& vocab) {
  std::string s;
  s.reserve(tokens.size());
  for (const TextToken& t : tokens) s.push_back(vocab.symbol_of(t.symbol_id));
  return s;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::BoundaryAware: return "boundary_aware";
    case Strategy::TokenConcat: return "token_concat";
    case Strategy::InstructionGuided: return "instruction_guided";
    case Strategy::Unconditioned: return "unconditioned";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "boundary_aware") return Strategy::BoundaryAware;
  if (name == "token_concat") return Strategy::TokenConcat;
  if (name == "instruction_guided") return Strategy::InstructionGuided;
  if (name == "unconditioned") return Strategy::Unconditioned;
  throw std::invalid_argument("unknown strategy: " + name);
}

int T2SSequence::ba_position() const {
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].role == Role::Special && layout[i].id == 1) return static_cast<int>(i);
  }
  throw std::logic_error("T2SSequence has no BA token");
}

InstructionTemplates InstructionTemplates::load(const std::string& json_path) {
  json j = read_json_file(json_path);
  InstructionTemplates t;
  t.templates.resize(j.at("templates").size());
  for (auto it = j.at("templates").begin(); it != j.at("templates").end(); ++it) {
    int lang = std::stoi(it.key());
    if (lang < 0 || lang >= static_cast<int>(t.templates.size())) {
      throw std::runtime_error("template table lang key out of range");
    }
    t.templates[lang] = it.value().get<std::vector<std::string>>();
  }
  return t;
}

InstructionTemplates InstructionTemplates::from_json_text(const std::string& json_text) {
  json j = json::parse(json_text);
  InstructionTemplates t;
  t.templates.resize(j.at("templates").size());
  for (auto it = j.at("templates").begin(); it != j.at("templates").end(); ++it) {
    int lang = std::stoi(it.key());
    t.templates[lang] = it.value().get<std::vector<std::string>>();
  }
  return t;
}

namespace {

void push_prefix(T2SSequence& seq, const Vocabulary& vocab) {
  seq.layout.push_back({Role::Cond, -1, -1});
  seq.layout.push_back({Role::Dur, -1, -1});
  seq.layout.push_back({Role::Special, vocab.special_id(SpecialKind::BT), -1});
}

void push_ba(T2SSequence& seq, const Vocabulary& vocab) {
  seq.layout.push_back({Role::Special, vocab.special_id(SpecialKind::BA), -1});
}

}  // namespace

T2SSequence assemble_boundary_aware(const std::vector<TextToken>& tokens, const Vocabulary& vocab) {
  T2SSequence seq;
  seq.strategy = Strategy::BoundaryAware;
  push_prefix(seq, vocab);
  // each maximal same-language run gets one open/close pair, never nested
  std::size_t i = 0;
  while (i < tokens.size()) {
    int lang = tokens[i].lang_id;
    seq.layout.push_back({Role::Special, vocab.special_id(SpecialKind::LidOpen, lang), -1});
    while (i < tokens.size() && tokens[i].lang_id == lang) {
      seq.layout.push_back({Role::Text, tokens[i].symbol_id, -1});
      ++i;
    }
    seq.layout.push_back({Role::Special, vocab.special_id(SpecialKind::LidClose, lang), -1});
  }
  push_ba(seq, vocab);
  return seq;
}

T2SSequence assemble_token_concat(const std::vector<TextToken>& tokens, const Vocabulary& vocab) {
  T2SSequence seq;
  seq.strategy = Strategy::TokenConcat;
  push_prefix(seq, vocab);
  for (const TextToken& t : tokens) {
    if (t.lang_id < 0 || t.lang_id >= vocab.num_languages()) {
      throw std::invalid_argument("token_concat: token missing a valid lang_id");
    }
    seq.layout.push_back({Role::Text, t.symbol_id, t.lang_id});
  }
  push_ba(seq, vocab);
  return seq;
}

T2SSequence assemble_instruction(const std::vector<TextToken>& tokens, const Vocabulary& vocab,
                                 const InstructionTemplates& table, int lang_id, int template_id,
                                 double rng_draw) {
  if (lang_id < 0 || lang_id >= static_cast<int>(table.templates.size())) {
    throw std::invalid_argument("assemble_instruction: lang_id out of range");
  }
  int n = table.count(lang_id);
  if (template_id == kRandomTemplate) {
    template_id = static_cast<int>(rng_draw * n);
    if (template_id >= n) template_id = n - 1;
  }
  if (template_id < 0 || template_id >= n) {
    throw std::invalid_argument("assemble_instruction: unknown template_id " + std::to_string(template_id));
  }
  T2SSequence seq;
  seq.strategy = Strategy::InstructionGuided;
  push_prefix(seq, vocab);
  for (char c : table.templates[lang_id][static_cast<std::size_t>(template_id)]) {
    seq.layout.push_back({Role::Instruction, vocab.symbol_id(c), -1});
  }
  seq.layout.push_back({Role::Special, vocab.special_id(SpecialKind::EOP), -1});
  for (const TextToken& t : tokens) seq.layout.push_back({Role::Text, t.symbol_id, -1});
  push_ba(seq, vocab);
  return seq;
}

T2SSequence assemble_unconditioned(const std::vector<TextToken>& tokens, const Vocabulary& vocab) {
  T2SSequence seq;
  seq.strategy = Strategy::Unconditioned;
  push_prefix(seq, vocab);
  for (const TextToken& t : tokens) seq.layout.push_back({Role::Text, t.symbol_id, -1});
  push_ba(seq, vocab);
  return seq;
}

T2SSequence assemble(Strategy s, const std::vector<TextToken>& tokens, const Vocabulary& vocab,
                     const InstructionTemplates* table, int template_id) {
  switch (s) {
    case Strategy::BoundaryAware: return assemble_boundary_aware(tokens, vocab);
    case Strategy::TokenConcat: return assemble_token_concat(tokens, vocab);
    case Strategy::InstructionGuided: {
      if (table == nullptr) throw std::invalid_argument("instruction strategy needs a template table");
      int lang = tokens.empty() ? 0 : tokens.front().lang_id;
      return assemble_instruction(tokens, vocab, *table, lang, template_id);
    }
    case Strategy::Unconditioned: return assemble_unconditioned(tokens, vocab);
  }
  throw std::logic_error("unreachable");
}

}  // namespace minitts::textproc
