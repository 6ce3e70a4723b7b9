#pragma once

// Prompt quantification: a deterministic lexicon + suffix POS tagger and a
// registry of scalar linguistic features computed from the tagged tokens.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "promptcause/error.hpp"
#include "promptcause/lexicon.hpp"

namespace promptcause {

enum class Pos { noun, verb, adj, adv, det, pron, prep, num, punct, ent, other };

inline std::string_view to_string(Pos p) {
  switch (p) {
    case Pos::noun: return "NOUN";
    case Pos::verb: return "VERB";
    case Pos::adj: return "ADJ";
    case Pos::adv: return "ADV";
    case Pos::det: return "DET";
    case Pos::pron: return "PRON";
    case Pos::prep: return "PREP";
    case Pos::num: return "NUM";
    case Pos::punct: return "PUNCT";
    case Pos::ent: return "ENT";
    case Pos::other: return "OTHER";
  }
  return "?";
}

struct Token {
  std::string surface;
  Pos pos = Pos::other;

  bool operator==(const Token&) const = default;
};

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const SentenceSpan&) const = default;
};

struct TokenSequence {
  std::vector<Token> tokens;
  std::vector<SentenceSpan> sentences;  // partition of tokens
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c == '\'' || c >= 0x80; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool is_terminator(std::string_view s) { return s == "." || s == "!" || s == "?"; }

inline Pos tag_word(std::string_view surface, bool sentence_initial) {
  const unsigned char first = static_cast<unsigned char>(surface.front());
  if (std::isdigit(first)) return Pos::num;
  const std::string w = lower(surface);
  if (lexicon::gazetteer().count(w)) return Pos::ent;
  // Mid-sentence capitalization marks a named entity; single letters are
  // usually variable names in problem statements and are not counted.
  if (!sentence_initial && std::isupper(first) && surface.size() > 1 && w != "i") return Pos::ent;
  if (lexicon::determiners().count(w)) return Pos::det;
  if (lexicon::pronouns().count(w)) return Pos::pron;
  if (lexicon::prepositions().count(w)) return Pos::prep;
  if (lexicon::coordinators().count(w)) return Pos::other;
  if (lexicon::number_words().count(w)) return Pos::num;
  if (lexicon::modals().count(w) || lexicon::verbs().count(w)) return Pos::verb;
  if (lexicon::adverbs().count(w)) return Pos::adv;
  if (lexicon::adjectives().count(w)) return Pos::adj;
  if (lexicon::clause_markers().count(w) || lexicon::negations().count(w)) return Pos::other;
  if (w.size() > 4 && ends_with(w, "ly")) return Pos::adv;
  for (std::string_view suf : {"tion", "sion", "ment", "ness", "ity", "ship", "ance", "ence"})
    if (ends_with(w, suf)) return Pos::noun;
  for (std::string_view suf : {"ing", "ed", "ize", "ise", "ify"})
    if (w.size() > suf.size() + 2 && ends_with(w, suf)) return Pos::verb;
  for (std::string_view suf : {"ous", "ful", "able", "ible", "ive", "less", "ical", "al", "ic", "ish", "ary"})
    if (w.size() > suf.size() + 2 && ends_with(w, suf)) return Pos::adj;
  return Pos::noun;
}

}  // namespace detail

// Words are runs of letters, digits, underscores and apostrophes (non-ASCII
// bytes count as letters); a number may carry an inner decimal point; every
// other non-space byte is a punctuation token. Sentences end at . ! ? or a
// blank line.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::size_t sentence_begin = 0;
  bool at_sentence_start = true;
  auto close_sentence = [&] {
    if (seq.tokens.size() > sentence_begin) seq.sentences.push_back({sentence_begin, seq.tokens.size()});
    sentence_begin = seq.tokens.size();
    at_sentence_start = true;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      if (c == '\n') {
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
        if (j < text.size() && text[j] == '\n') close_sentence();
      }
      ++i;
      continue;
    }
    if (std::isdigit(c)) {
      std::size_t j = i;
      while (j < text.size()) {
        const unsigned char d = static_cast<unsigned char>(text[j]);
        if (std::isdigit(d) || std::isalpha(d) || d == '_') {
          ++j;
        } else if ((d == '.' || d == ',') && j + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
          ++j;
        } else {
          break;
        }
      }
      seq.tokens.push_back({std::string(text.substr(i, j - i)), Pos::num});
      at_sentence_start = false;
      i = j;
      continue;
    }
    if (detail::is_word_byte(c) && c != '\'') {
      std::size_t j = i;
      while (j < text.size() && detail::is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      std::size_t end = j;
      while (end > i + 1 && text[end - 1] == '\'') --end;
      const std::string_view surface = text.substr(i, end - i);
      seq.tokens.push_back({std::string(surface), detail::tag_word(surface, at_sentence_start)});
      at_sentence_start = false;
      i = end;
      continue;
    }
    const std::string surface(1, static_cast<char>(c));
    seq.tokens.push_back({surface, std::ispunct(c) ? Pos::punct : Pos::other});
    ++i;
    if (detail::is_terminator(surface)) {
      // Absorb a run of terminators (e.g. "?!" or "...") into this sentence.
      while (i < text.size() && detail::is_terminator(text.substr(i, 1))) {
        seq.tokens.push_back({std::string(1, text[i]), Pos::punct});
        ++i;
      }
      close_sentence();
    }
  }
  close_sentence();
  return seq;
}

// ---------------------------------------------------------------------------
// Feature registry

enum class FeatureFamily { lexical, syntactic_shallow, semantic_lexicon };

inline std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::lexical: return "lexical";
    case FeatureFamily::syntactic_shallow: return "syntactic_shallow";
    case FeatureFamily::semantic_lexicon: return "semantic_lexicon";
  }
  return "?";
}

struct FeatureSpec {
  std::string name;
  FeatureFamily family = FeatureFamily::lexical;
  std::string description;
  std::function<double(const TokenSequence&)> compute;
};

using FeatureRegistry = std::vector<FeatureSpec>;

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;

  bool operator==(const FeatureVector&) const = default;
};

namespace features {

inline bool is_word(const Token& t) {
  const unsigned char c = static_cast<unsigned char>(t.surface.front());
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

inline std::vector<std::string> words(const TokenSequence& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tokens)
    if (is_word(t)) out.push_back(detail::lower(t.surface));
  return out;
}

inline double count_pos(const TokenSequence& s, Pos p) {
  return static_cast<double>(std::count_if(s.tokens.begin(), s.tokens.end(), [p](const Token& t) { return t.pos == p; }));
}

inline double unique_pos(const TokenSequence& s, Pos p) {
  std::set<std::string> u;
  for (const auto& t : s.tokens)
    if (t.pos == p) u.insert(detail::lower(t.surface));
  return static_cast<double>(u.size());
}

inline double unique_words(const TokenSequence& s) {
  const auto w = words(s);
  return static_cast<double>(std::set<std::string>(w.begin(), w.end()).size());
}

inline double count_in(const TokenSequence& s, const lexicon::WordSet& set) {
  double n = 0;
  for (const auto& t : s.tokens)
    if (set.count(detail::lower(t.surface))) ++n;
  return n;
}

inline double count_surface(const TokenSequence& s, std::string_view surface) {
  return static_cast<double>(
      std::count_if(s.tokens.begin(), s.tokens.end(), [surface](const Token& t) { return t.surface == surface; }));
}

inline double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

inline int syllables(std::string_view word) {
  auto vowel = [](char c) { return std::string_view("aeiouy").find(c) != std::string_view::npos; };
  int n = 0;
  bool prev = false;
  for (char c : word) {
    const bool v = vowel(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (v && !prev) ++n;
    prev = v;
  }
  if (word.size() > 2 && word.back() == 'e' && !vowel(word[word.size() - 2]) && n > 1) --n;
  return std::max(n, 1);
}

inline double sentence_words(const TokenSequence& s, const SentenceSpan& span) {
  double n = 0;
  for (std::size_t i = span.begin; i < span.end; ++i)
    if (is_word(s.tokens[i])) ++n;
  return n;
}

}  // namespace features

// Documented subset of the lexical, shallow-syntactic and lexicon-semantic
// families. Every feature is total: empty input yields 0.
inline FeatureRegistry default_feature_registry() {
  using namespace features;
  using F = FeatureFamily;
  FeatureRegistry reg;
  auto add = [&reg](std::string name, F family, std::string desc, std::function<double(const TokenSequence&)> fn) {
    reg.push_back({std::move(name), family, std::move(desc), std::move(fn)});
  };

  add("token_count", F::lexical, "number of tokens including punctuation",
      [](const TokenSequence& s) { return static_cast<double>(s.tokens.size()); });
  add("word_count", F::lexical, "number of word tokens", [](const TokenSequence& s) { return static_cast<double>(words(s).size()); });
  add("char_count", F::lexical, "number of characters in word tokens", [](const TokenSequence& s) {
    double n = 0;
    for (const auto& w : words(s)) n += static_cast<double>(w.size());
    return n;
  });
  add("sentence_count", F::lexical, "number of sentences",
      [](const TokenSequence& s) { return static_cast<double>(s.sentences.size()); });
  add("unique_word_count", F::lexical, "number of distinct lower-cased words", [](const TokenSequence& s) { return unique_words(s); });
  add("simp_ttr", F::lexical, "type-token ratio: distinct words / words, in [0,1]",
      [](const TokenSequence& s) { return ratio(unique_words(s), static_cast<double>(words(s).size())); });
  add("root_ttr", F::lexical, "root type-token ratio: distinct words / sqrt(words)", [](const TokenSequence& s) {
    return ratio(unique_words(s), std::sqrt(static_cast<double>(words(s).size())));
  });
  add("corr_ttr", F::lexical, "corrected type-token ratio: distinct words / sqrt(2 * words)", [](const TokenSequence& s) {
    return ratio(unique_words(s), std::sqrt(2.0 * static_cast<double>(words(s).size())));
  });
  add("bilog_ttr", F::lexical, "bilogarithmic type-token ratio: log(distinct) / log(words), 0 when words <= 1",
      [](const TokenSequence& s) {
        const double n = static_cast<double>(words(s).size());
        return n > 1 ? std::log(unique_words(s)) / std::log(n) : 0.0;
      });
  add("uber_index", F::lexical, "Uber index: log(words)^2 / (log(words) - log(distinct)), 0 when all words distinct",
      [](const TokenSequence& s) {
        const double n = static_cast<double>(words(s).size());
        const double u = unique_words(s);
        if (n <= 1 || u >= n) return 0.0;
        return std::pow(std::log(n), 2) / (std::log(n) - std::log(u));
      });

  const std::pair<const char*, Pos> pos_kinds[] = {{"noun", Pos::noun}, {"verb", Pos::verb}, {"adj", Pos::adj},
                                                   {"adv", Pos::adv},   {"det", Pos::det},   {"pron", Pos::pron},
                                                   {"prep", Pos::prep}};
  for (const auto& [label, pos] : pos_kinds) {
    const std::string l = label;
    add(l + "_count", F::lexical, "number of " + l + " tokens", [pos](const TokenSequence& s) { return count_pos(s, pos); });
  }
  for (const auto& [label, pos] : pos_kinds) {
    const std::string l = label;
    add("root_" + l + "_var", F::lexical, "distinct " + l + " tokens / sqrt(" + l + " tokens), 0 when none",
        [pos](const TokenSequence& s) { return ratio(unique_pos(s, pos), std::sqrt(count_pos(s, pos))); });
  }
  for (const auto& [label, pos] : pos_kinds) {
    const std::string l = label;
    add("simp_" + l + "_var", F::lexical, "distinct " + l + " tokens / " + l + " tokens, in [0,1]",
        [pos](const TokenSequence& s) { return ratio(unique_pos(s, pos), count_pos(s, pos)); });
  }
  add("num_count", F::lexical, "number of numeric tokens", [](const TokenSequence& s) { return count_pos(s, Pos::num); });
  add("punct_count", F::lexical, "number of punctuation tokens", [](const TokenSequence& s) { return count_pos(s, Pos::punct); });
  add("content_word_ratio", F::lexical, "nouns, verbs, adjectives and adverbs / words, in [0,1]", [](const TokenSequence& s) {
    return ratio(count_pos(s, Pos::noun) + count_pos(s, Pos::verb) + count_pos(s, Pos::adj) + count_pos(s, Pos::adv),
                 static_cast<double>(words(s).size()));
  });

  add("mean_sentence_length", F::syntactic_shallow, "words per sentence", [](const TokenSequence& s) {
    return ratio(static_cast<double>(words(s).size()), static_cast<double>(s.sentences.size()));
  });
  add("max_sentence_length", F::syntactic_shallow, "words in the longest sentence", [](const TokenSequence& s) {
    double best = 0;
    for (const auto& span : s.sentences) best = std::max(best, sentence_words(s, span));
    return best;
  });
  add("mean_word_length", F::syntactic_shallow, "characters per word", [](const TokenSequence& s) {
    const auto w = words(s);
    double chars = 0;
    for (const auto& x : w) chars += static_cast<double>(x.size());
    return ratio(chars, static_cast<double>(w.size()));
  });
  add("long_word_ratio", F::syntactic_shallow, "words longer than 6 characters / words, in [0,1]", [](const TokenSequence& s) {
    const auto w = words(s);
    const auto n = std::count_if(w.begin(), w.end(), [](const std::string& x) { return x.size() > 6; });
    return ratio(static_cast<double>(n), static_cast<double>(w.size()));
  });
  add("punctuation_density", F::syntactic_shallow, "punctuation tokens / tokens, in [0,1]", [](const TokenSequence& s) {
    return ratio(count_pos(s, Pos::punct), static_cast<double>(s.tokens.size()));
  });
  add("comma_count", F::syntactic_shallow, "number of commas", [](const TokenSequence& s) { return count_surface(s, ","); });
  add("question_mark_count", F::syntactic_shallow, "number of question marks",
      [](const TokenSequence& s) { return count_surface(s, "?"); });
  add("clause_marker_count", F::syntactic_shallow, "subordinators and relativizers opening a clause",
      [](const TokenSequence& s) { return count_in(s, lexicon::clause_markers()); });
  add("coord_conj_count", F::syntactic_shallow, "coordinating conjunctions",
      [](const TokenSequence& s) { return count_in(s, lexicon::coordinators()); });
  add("clauses_per_sentence", F::syntactic_shallow, "(1 + clause markers) per sentence, 0 on empty text",
      [](const TokenSequence& s) {
        const double n = static_cast<double>(s.sentences.size());
        return ratio(n + count_in(s, lexicon::clause_markers()), n);
      });
  add("mean_syllables_per_word", F::syntactic_shallow, "vowel-group syllable estimate per word", [](const TokenSequence& s) {
    const auto w = words(s);
    double syl = 0;
    for (const auto& x : w) syl += syllables(x);
    return ratio(syl, static_cast<double>(w.size()));
  });
  add("flesch_reading_ease", F::syntactic_shallow, "206.835 - 1.015 words/sentence - 84.6 syllables/word, 0 on empty text",
      [](const TokenSequence& s) {
        const auto w = words(s);
        if (w.empty() || s.sentences.empty()) return 0.0;
        double syl = 0;
        for (const auto& x : w) syl += syllables(x);
        const double n = static_cast<double>(w.size());
        return 206.835 - 1.015 * (n / static_cast<double>(s.sentences.size())) - 84.6 * (syl / n);
      });

  add("named_entity_count", F::semantic_lexicon, "mid-sentence capitalized words and gazetteer hits",
      [](const TokenSequence& s) { return count_pos(s, Pos::ent); });
  add("unique_named_entity_count", F::semantic_lexicon, "distinct named entities",
      [](const TokenSequence& s) { return unique_pos(s, Pos::ent); });
  add("mean_word_familiarity", F::semantic_lexicon, "mean of 1 - rank/size over the bundled frequency list, 0 for unlisted words",
      [](const TokenSequence& s) {
        const auto& ranks = lexicon::frequency_ranks();
        const double size = static_cast<double>(ranks.size());
        const auto w = words(s);
        double total = 0;
        for (const auto& x : w)
          if (auto it = ranks.find(x); it != ranks.end()) total += 1.0 - static_cast<double>(it->second) / size;
        return ratio(total, static_cast<double>(w.size()));
      });
  add("rare_word_ratio", F::semantic_lexicon, "words absent from the frequency list / words, in [0,1]", [](const TokenSequence& s) {
    const auto& ranks = lexicon::frequency_ranks();
    const auto w = words(s);
    const auto n = std::count_if(w.begin(), w.end(), [&](const std::string& x) { return !ranks.count(x); });
    return ratio(static_cast<double>(n), static_cast<double>(w.size()));
  });
  add("modal_count", F::semantic_lexicon, "modal verbs", [](const TokenSequence& s) { return count_in(s, lexicon::modals()); });
  add("negation_count", F::semantic_lexicon, "negation words", [](const TokenSequence& s) { return count_in(s, lexicon::negations()); });
  add("code_token_count", F::semantic_lexicon, "identifier-like tokens (underscore, or letters mixed with digits)",
      [](const TokenSequence& s) {
        double n = 0;
        for (const auto& t : s.tokens) {
          const bool alpha = std::any_of(t.surface.begin(), t.surface.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
          const bool digit = std::any_of(t.surface.begin(), t.surface.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
          if (t.surface.size() > 1 && (t.surface.find('_') != std::string::npos || (alpha && digit))) ++n;
        }
        return n;
      });
  return reg;
}

// Registry restricted to `names`, in the order given.
inline FeatureRegistry select_features(const FeatureRegistry& registry, const std::vector<std::string>& names) {
  FeatureRegistry out;
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    auto it = std::find_if(registry.begin(), registry.end(), [&](const FeatureSpec& f) { return f.name == n; });
    if (it == registry.end()) throw Error("unknown linguistic feature '" + n + "'");
    if (!seen.insert(n).second) throw Error("feature '" + n + "' selected twice");
    out.push_back(*it);
  }
  return out;
}

inline FeatureVector extract_features(const TokenSequence& tokens, const FeatureRegistry& registry) {
  if (registry.empty()) throw Error("feature registry is empty");
  FeatureVector fv;
  fv.names.reserve(registry.size());
  fv.values.reserve(registry.size());
  for (const auto& spec : registry) {
    const double v = spec.compute(tokens);
    fv.names.push_back(spec.name);
    fv.values.push_back(std::isfinite(v) ? v : 0.0);
  }
  return fv;
}

inline FeatureVector extract_features(std::string_view text, const FeatureRegistry& registry) {
  return extract_features(tokenize(text), registry);
}

struct FeatureInfo {
  std::string name;
  FeatureFamily family;
  std::string description;
};

inline std::vector<FeatureInfo> list_features(const FeatureRegistry& registry) {
  std::vector<FeatureInfo> out;
  for (const auto& f : registry) out.push_back({f.name, f.family, f.description});
  return out;
}

}  // namespace promptcause
