#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "minitts/core/rng.hpp"
#include "minitts/textproc/textproc.hpp"
#include "testpaths.hpp"

using namespace minitts;
using namespace minitts::textproc;

namespace {

Vocabulary vocab() { return Vocabulary::load(test_asset("vocab.json")); }
InstructionTemplates templates() { return InstructionTemplates::load(test_asset("templates.json")); }

int count_role(const T2SSequence& s, Role r) {
  int n = 0;
  for (const auto& e : s.layout) n += (e.role == r) ? 1 : 0;
  return n;
}

int count_special(const T2SSequence& s, int id) {
  int n = 0;
  for (const auto& e : s.layout) n += (e.role == Role::Special && e.id == id) ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("tokenize_assigns_span_lang_and_roundtrips") {
  Vocabulary v = vocab();
  auto toks = tokenize("ab", {{0, 2, 0}}, v);
  REQUIRE(toks.size() == 2);
  CHECK(toks[0].symbol_id == v.symbol_id('a'));
  CHECK(toks[0].lang_id == 0);
  CHECK(toks[1].symbol_id == v.symbol_id('b'));
  CHECK(detokenize(toks, v) == "ab");

  CHECK(tokenize("", {}, v).empty());

  auto mixed = tokenize("aG", {{0, 1, 0}, {1, 2, 1}}, v);
  REQUIRE(mixed.size() == 2);
  CHECK(mixed[0].lang_id == 0);
  CHECK(mixed[1].lang_id == 1);
  CHECK(mixed[1].symbol_id == v.symbol_id('G'));
}

TEST_CASE("tokenize_rejects_oov_with_symbol_and_offset") {
  Vocabulary v = vocab();
  try {
    tokenize("ab?", {{0, 3, 0}}, v);
    FAIL("expected OOV error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find('?') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("tokenize_rejects_bad_spans") {
  Vocabulary v = vocab();
  CHECK_THROWS_AS(tokenize("abc", {{0, 2, 0}}, v), std::invalid_argument);          // gap at end
  CHECK_THROWS_AS(tokenize("abc", {{0, 2, 0}, {1, 3, 0}}, v), std::invalid_argument);  // overlap
  CHECK_THROWS_AS(tokenize("ab", {{0, 2, 7}}, v), std::invalid_argument);           // bad lang
}

TEST_CASE("boundary_aware_wraps_single_run") {
  Vocabulary v = vocab();
  auto toks = tokenize("ab", {{0, 2, 0}}, v);
  T2SSequence s = assemble_boundary_aware(toks, v);
  // [c, p, BT, <L0>, a, b, </L0>, BA]
  REQUIRE(s.layout.size() == 8);
  CHECK(s.layout[0].role == Role::Cond);
  CHECK(s.layout[1].role == Role::Dur);
  CHECK(s.layout[2].id == v.special_id(SpecialKind::BT));
  CHECK(s.layout[3].id == v.special_id(SpecialKind::LidOpen, 0));
  CHECK(s.layout[4].role == Role::Text);
  CHECK(s.layout[6].id == v.special_id(SpecialKind::LidClose, 0));
  CHECK(s.layout[7].id == v.special_id(SpecialKind::BA));
}

TEST_CASE("boundary_aware_empty_input_is_minimal_layout") {
  Vocabulary v = vocab();
  T2SSequence s = assemble_boundary_aware({}, v);
  REQUIRE(s.layout.size() == 4);
  CHECK(s.layout[2].id == v.special_id(SpecialKind::BT));
  CHECK(s.layout[3].id == v.special_id(SpecialKind::BA));
}

TEST_CASE("boundary_aware_wraps_each_maximal_run") {
  Vocabulary v = vocab();
  auto toks = tokenize("ab", {{0, 1, 0}, {1, 2, 1}}, v);
  T2SSequence s = assemble_boundary_aware(toks, v);
  // [c,p,BT,<0>,a,</0>,<1>,b,</1>,BA]
  REQUIRE(s.layout.size() == 10);
  CHECK(s.layout[3].id == v.special_id(SpecialKind::LidOpen, 0));
  CHECK(s.layout[5].id == v.special_id(SpecialKind::LidClose, 0));
  CHECK(s.layout[6].id == v.special_id(SpecialKind::LidOpen, 1));
  CHECK(s.layout[8].id == v.special_id(SpecialKind::LidClose, 1));
}

TEST_CASE("token_concat_keeps_per_token_lang_and_no_lid") {
  Vocabulary v = vocab();
  auto toks = tokenize("ab", {{0, 1, 0}, {1, 2, 1}}, v);
  T2SSequence s = assemble_token_concat(toks, v);
  REQUIRE(s.layout.size() == 6);
  CHECK(s.layout[3].role == Role::Text);
  CHECK(s.layout[3].lang_id == 0);
  CHECK(s.layout[4].lang_id == 1);
  for (int lang = 0; lang < 2; ++lang) {
    CHECK(count_special(s, v.special_id(SpecialKind::LidOpen, lang)) == 0);
    CHECK(count_special(s, v.special_id(SpecialKind::LidClose, lang)) == 0);
  }
  T2SSequence empty = assemble_token_concat({}, v);
  CHECK(empty.layout.size() == 4);
}

TEST_CASE("token_concat_rejects_missing_lang") {
  Vocabulary v = vocab();
  std::vector<TextToken> toks = {{0, -1}};
  CHECK_THROWS_AS(assemble_token_concat(toks, v), std::invalid_argument);
}

TEST_CASE("instruction_layout_and_determinism") {
  Vocabulary v = vocab();
  InstructionTemplates tab = templates();
  auto toks = tokenize("abc", {{0, 3, 0}}, v);
  T2SSequence s1 = assemble_instruction(toks, v, tab, 0, 0);
  T2SSequence s2 = assemble_instruction(toks, v, tab, 0, 0);
  REQUIRE(s1.layout.size() == s2.layout.size());
  for (std::size_t i = 0; i < s1.layout.size(); ++i) {
    CHECK(s1.layout[i].role == s2.layout[i].role);
    CHECK(s1.layout[i].id == s2.layout[i].id);
  }
  // [c,p,BT, instr..., EOP, text..., BA]
  CHECK(s1.layout[2].id == v.special_id(SpecialKind::BT));
  std::size_t i = 3;
  while (i < s1.layout.size() && s1.layout[i].role == Role::Instruction) ++i;
  CHECK(i > 3);  // template non-empty
  CHECK(s1.layout[i].id == v.special_id(SpecialKind::EOP));
  CHECK(s1.layout[i + 1].role == Role::Text);
  CHECK(s1.layout.back().id == v.special_id(SpecialKind::BA));

  T2SSequence empty = assemble_instruction({}, v, tab, 0, 0);
  CHECK(empty.layout[empty.layout.size() - 2].id == v.special_id(SpecialKind::EOP));
  CHECK(count_role(empty, Role::Text) == 0);

  CHECK_THROWS_AS(assemble_instruction(toks, v, tab, 0, 99), std::invalid_argument);
}

TEST_CASE("all_template_strings_are_in_language_vocab") {
  Vocabulary v = vocab();
  InstructionTemplates tab = templates();
  REQUIRE(tab.templates.size() == 2);
  for (int lang = 0; lang < 2; ++lang) {
    CHECK(tab.count(lang) == 8);
    for (const auto& t : tab.templates[lang]) {
      for (char c : t) CHECK(v.contains(c));
    }
  }
}

TEST_CASE("every_strategy_has_one_bt_then_one_ba") {
  Vocabulary v = vocab();
  InstructionTemplates tab = templates();
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int n = rng.uniform_int(0, 12);
    std::vector<TextToken> toks;
    for (int i = 0; i < n; ++i) toks.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 1)});
    for (Strategy st : {Strategy::BoundaryAware, Strategy::TokenConcat, Strategy::InstructionGuided,
                        Strategy::Unconditioned}) {
      T2SSequence s = assemble(st, toks, v, &tab, trial % 8);
      CHECK(count_special(s, v.special_id(SpecialKind::BT)) == 1);
      CHECK(count_special(s, v.special_id(SpecialKind::BA)) == 1);
      int bt = -1, ba = -1;
      for (std::size_t i = 0; i < s.layout.size(); ++i) {
        if (s.layout[i].role == Role::Special && s.layout[i].id == v.special_id(SpecialKind::BT)) bt = static_cast<int>(i);
        if (s.layout[i].role == Role::Special && s.layout[i].id == v.special_id(SpecialKind::BA)) ba = static_cast<int>(i);
      }
      CHECK(bt == 2);
      CHECK(ba == static_cast<int>(s.layout.size()) - 1);
      CHECK(s.layout[0].role == Role::Cond);
      CHECK(s.layout[1].role == Role::Dur);
    }
  }
}

TEST_CASE("boundary_pairs_are_balanced_and_never_nested") {
  Vocabulary v = vocab();
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    int n = rng.uniform_int(0, 20);
    std::vector<TextToken> toks;
    for (int i = 0; i < n; ++i) toks.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 1)});
    T2SSequence s = assemble_boundary_aware(toks, v);
    int open_lang = -1;
    int pairs = 0;
    for (const auto& e : s.layout) {
      if (e.role != Role::Special) continue;
      for (int lang = 0; lang < 2; ++lang) {
        if (e.id == v.special_id(SpecialKind::LidOpen, lang)) {
          CHECK(open_lang == -1);  // no nesting
          open_lang = lang;
        }
        if (e.id == v.special_id(SpecialKind::LidClose, lang)) {
          CHECK(open_lang == lang);  // balanced
          open_lang = -1;
          ++pairs;
        }
      }
    }
    CHECK(open_lang == -1);
    // pairs == number of maximal runs
    int runs = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i == 0 || toks[i].lang_id != toks[i - 1].lang_id) ++runs;
    }
    CHECK(pairs == runs);
  }
}

TEST_CASE("token_count_overhead_matches_contract") {
  Vocabulary v = vocab();
  InstructionTemplates tab = templates();
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = rng.uniform_int(1, 24);
    std::vector<TextToken> toks;
    for (int i = 0; i < n; ++i) toks.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 1)});
    int runs = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i == 0 || toks[i].lang_id != toks[i - 1].lang_id) ++runs;
    }
    auto ba = assemble_boundary_aware(toks, v);
    auto tc = assemble_token_concat(toks, v);
    int tmpl = trial % 8;
    auto ig = assemble_instruction(toks, v, tab, 0, tmpl);
    CHECK(ba.layout.size() == tc.layout.size() + 2 * static_cast<std::size_t>(runs));
    CHECK(ig.layout.size() == tc.layout.size() + tab.templates[0][tmpl].size() + 1);
  }
}

TEST_CASE("random_template_draw_is_uniform_over_table") {
  Vocabulary v = vocab();
  InstructionTemplates tab = templates();
  auto toks = tokenize("ab", {{0, 2, 0}}, v);
  Rng rng(8);
  std::set<std::size_t> sizes;
  for (int i = 0; i < 200; ++i) {
    T2SSequence s = assemble_instruction(toks, v, tab, 0, kRandomTemplate, rng.uniform());
    sizes.insert(s.layout.size());
  }
  // the 8 templates have several distinct lengths; sampling must reach more than one
  CHECK(sizes.size() > 1);
}
