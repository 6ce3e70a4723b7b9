#pragma once

// Bundled word lists for the lexicon tagger and the familiarity features.

#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace promptcause::lexicon {

using WordSet = std::unordered_set<std::string_view>;

inline const WordSet& determiners() {
  static const WordSet s{"the", "a", "an", "this", "that", "these", "those", "each", "every", "either", "neither",
                         "some", "any", "no", "all", "both", "another", "such", "what", "which", "whatever",
                         "several", "many", "much", "few", "more", "most", "less", "least", "enough"};
  return s;
}

inline const WordSet& pronouns() {
  static const WordSet s{"i",      "me",      "my",     "mine",     "myself",  "you",    "your",     "yours",
                         "yourself", "he",    "him",    "his",      "himself", "she",    "her",      "hers",
                         "herself", "it",     "its",    "itself",   "we",      "us",     "our",      "ours",
                         "ourselves", "they", "them",   "their",    "theirs",  "themselves", "who", "whom",
                         "whose",  "someone", "anyone", "everyone", "nobody",  "nothing", "something", "anything",
                         "everything", "one", "ones"};
  return s;
}

inline const WordSet& prepositions() {
  static const WordSet s{"of",     "in",      "to",     "for",    "with",    "on",      "at",     "from",
                         "by",     "about",   "as",     "into",   "like",    "through", "after",  "over",
                         "between", "out",    "against", "during", "without", "before", "under",  "around",
                         "among",  "within",  "along",  "across", "behind",  "beyond",  "up",     "down",
                         "off",    "above",   "below",  "onto",   "upon",    "toward",  "towards", "per",
                         "via",    "inside",  "outside", "near",  "beside",  "besides", "except", "than"};
  return s;
}

inline const WordSet& coordinators() {
  static const WordSet s{"and", "or", "but", "nor", "yet", "so"};
  return s;
}

// Subordinators and relativizers that open a clause.
inline const WordSet& clause_markers() {
  static const WordSet s{"because", "although", "though", "if", "when", "whenever", "while", "which", "that",
                         "who", "whom", "whose", "where", "wherever", "unless", "since", "until", "whereas",
                         "whether", "once", "after", "before"};
  return s;
}

inline const WordSet& modals() {
  static const WordSet s{"can", "could", "must", "should", "may", "might", "will", "would", "shall"};
  return s;
}

inline const WordSet& negations() {
  static const WordSet s{"not", "no", "never", "none", "nor", "cannot", "don't", "doesn't", "didn't", "isn't",
                         "aren't", "wasn't", "weren't", "won't", "can't", "shouldn't", "wouldn't", "couldn't"};
  return s;
}

inline const WordSet& number_words() {
  static const WordSet s{"zero", "two",    "three",  "four",    "five",     "six",     "seven",
                         "eight", "nine",  "ten",    "eleven",  "twelve",   "twenty",  "hundred",
                         "thousand", "million", "billion", "first", "second", "third", "half"};
  return s;
}

// Frequent verbs incl. auxiliaries and irregular past forms.
inline const WordSet& verbs() {
  static const WordSet s{
      "is",      "are",     "was",      "were",     "be",       "been",     "being",    "am",       "do",
      "does",    "did",     "done",     "have",     "has",      "had",      "get",      "gets",     "got",
      "make",    "makes",   "made",     "take",     "takes",    "took",     "taken",    "give",     "gives",
      "gave",    "given",   "go",       "goes",     "went",     "gone",     "come",     "comes",    "came",
      "see",     "sees",    "saw",      "seen",     "know",     "knows",    "knew",     "known",    "think",
      "thinks",  "thought", "say",      "says",     "said",     "tell",     "tells",    "told",     "find",
      "finds",   "found",   "sit",      "sits",     "sat",      "stand",    "stood",    "run",      "runs",
      "ran",     "write",   "writes",   "wrote",    "written",  "read",     "reads",    "print",    "prints",
      "output",  "outputs", "return",   "returns",  "compute",  "computes", "calculate", "determine",
      "count",   "counts",  "ask",      "asks",     "want",     "wants",    "need",     "needs",    "help",
      "use",     "uses",    "let",      "lets",     "put",      "puts",     "keep",     "keeps",    "kept",
      "begin",   "began",   "begun",    "become",   "became",   "show",     "shows",    "shown",    "contain",
      "contains", "consist", "consists", "denote",  "denotes",  "represent", "represents", "choose", "chose",
      "chosen",  "solve",   "solves",   "check",    "checks",   "sort",     "sorts",    "add",      "adds",
      "remove",  "removes", "replace",  "replaces", "move",     "moves",    "buy",      "bought",   "sell",
      "sold",    "pay",     "paid",     "win",      "wins",     "won",      "lose",     "lost",     "play",
      "plays",   "meet",    "met",      "leave",    "left",     "hold",     "held",     "bring",    "brought",
      "build",   "built",   "send",     "sent",     "spend",    "spent",    "lie",      "lay",      "fall",
      "fell",    "eat",     "ate",      "grow",     "grew",     "draw",     "drew",     "break",    "broke",
      "speak",   "spoke",   "rise",     "rose",     "split",    "splits",   "cut",      "set",      "sets",
      "reach",   "reaches", "visit",    "visits",   "form",     "forms",    "turn",     "turns",    "try",
      "tries",   "call",    "calls",    "rephrase", "generate", "exist",    "exists",   "satisfy",  "satisfies",
      "equal",   "equals",  "follow",   "follows",  "allow",    "allows",   "guarantee", "guaranteed"};
  return s;
}

inline const WordSet& adjectives() {
  static const WordSet s{"good",  "new",    "first", "last",  "long",   "great",  "little", "own",    "other",
                         "old",   "right",  "big",   "high",  "different", "small", "large", "next",  "early",
                         "young", "important", "few", "public", "bad", "same",  "able",  "short",  "simple",
                         "easy",  "hard",   "possible", "minimum", "maximum", "total", "even", "odd",  "positive",
                         "negative", "empty", "valid", "single", "distinct", "whole", "correct", "wrong", "true",
                         "false", "best",   "worst", "smallest", "largest", "new", "free", "full", "clear", "sure",
                         "certain", "given", "initial", "final", "exact", "unique", "equal", "formal", "fluent"};
  return s;
}

inline const WordSet& adverbs() {
  static const WordSet s{"also", "very", "often", "however", "too", "usually", "really", "already", "always",
                         "never", "sometimes", "together", "likely", "simply", "generally", "instead", "actually",
                         "again", "rather", "almost", "especially", "ever", "quickly", "probably", "here", "there",
                         "then", "now", "just", "only", "still", "even", "exactly", "soon", "once", "twice",
                         "respectively", "otherwise", "thus", "therefore", "hence", "moreover", "finally"};
  return s;
}

// Proper names and product names that show up in programming statements.
inline const WordSet& gazetteer() {
  static const WordSet s{"alice",  "bob",     "charlie", "dave",   "eve",      "carol",   "vasya",  "petya",
                         "monocarp", "polycarp", "john",   "mary",   "anna",     "tom",     "python", "java",
                         "javascript", "linux", "windows", "google", "codeforces", "leetcode", "london",
                         "paris",  "berland", "january", "february", "march",   "april",   "june",   "july",
                         "august", "september", "october", "november", "december", "monday", "tuesday",
                         "wednesday", "thursday", "friday", "saturday", "sunday"};
  return s;
}

// Rank-ordered frequent English words plus common problem-statement vocabulary.
// Familiarity of a word is 1 - rank / size; words outside the list score 0.
inline const std::unordered_map<std::string_view, int>& frequency_ranks() {
  static const auto ranks = [] {
    static constexpr std::string_view words[] = {
        "the", "be", "to", "of", "and", "a", "in", "that", "have", "i", "it", "for", "not", "on", "with", "he",
        "as", "you", "do", "at", "this", "but", "his", "by", "from", "they", "we", "say", "her", "she", "or",
        "an", "will", "my", "one", "all", "would", "there", "their", "what", "so", "up", "out", "if", "about",
        "who", "get", "which", "go", "me", "when", "make", "can", "like", "time", "no", "just", "him", "know",
        "take", "people", "into", "year", "your", "good", "some", "could", "them", "see", "other", "than",
        "then", "now", "look", "only", "come", "its", "over", "think", "also", "back", "after", "use", "two",
        "how", "our", "work", "first", "well", "way", "even", "new", "want", "because", "any", "these", "give",
        "day", "most", "us", "is", "are", "was", "were", "has", "had", "number", "numbers", "each", "given",
        "find", "print", "line", "input", "output", "integer", "integers", "string", "strings", "first",
        "second", "many", "more", "less", "same", "long", "short", "list", "array", "sum", "value", "values",
        "test", "case", "cases", "answer", "write", "program", "read", "single", "contains", "containing",
        "must", "should", "may", "every", "between", "word", "words", "letter", "letters", "character",
        "characters", "length", "size", "order", "sorted", "sort", "largest", "smallest", "maximum",
        "minimum", "total", "count", "result", "return", "element", "elements", "position", "index", "pair",
        "pairs", "different", "distinct", "possible", "where", "while", "following", "next", "last", "end",
        "start", "game", "player", "players", "point", "points", "name", "names", "student", "students",
        "question", "problem", "solution", "task", "example", "examples", "note", "space", "spaces",
        "separated", "consists", "consisting", "positive", "negative", "zero", "even", "odd", "digit",
        "digits", "times", "small", "large", "big", "little", "old", "great", "high", "right", "left", "place",
        "thing", "world", "life", "hand", "part", "child", "eye", "woman", "man", "school", "house", "room",
        "water", "book", "money", "friend", "friends", "story", "fact", "month", "lot", "night", "home",
        "area", "city", "car", "cat", "dog", "tree", "food", "door", "table", "box", "boxes", "coin", "coins",
        "ask", "tell", "need", "feel", "try", "leave", "call", "keep", "let", "begin", "seem", "help", "show",
        "hear", "play", "run", "move", "live", "believe", "bring", "happen", "sit", "sat", "stand", "lose",
        "pay", "meet", "include", "continue", "set", "learn", "change", "lead", "understand", "watch",
        "follow", "stop", "create", "speak", "allow", "add", "spend", "grow", "open", "walk", "win", "offer",
        "remember", "love", "consider", "appear", "buy", "wait", "serve", "die", "send", "expect", "build",
        "stay", "fall", "cut", "reach", "kill", "remain", "please", "simple", "easy", "clear", "fluent",
        "formal", "student", "teacher", "competition", "interview", "exercise", "textbook"};
    std::unordered_map<std::string_view, int> m;
    int rank = 0;
    for (auto w : words) m.emplace(w, rank++);  // first occurrence wins
    return m;
  }();
  return ranks;
}

}  // namespace promptcause::lexicon
