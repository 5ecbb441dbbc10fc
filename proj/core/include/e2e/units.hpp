// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0
//
// Mandarin modeling units: tonal syllables, context-dependent phonemes over
// syllable initials / tonal finals, Chinese characters, and the label
// vocabularies built from them.

#ifndef E2E_UNITS_HPP_
#define E2E_UNITS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace e2e {

// --- UTF-8 helpers ---------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(char32_t cp);
std::string utf8_encode(const std::vector<char32_t>& cps);
bool is_han(char32_t cp);

// --- Pinyin ---------------------------------------------------------------

/// Legal syllable initials and finals. The default inventory is the
/// standard scheme: 23 initials, finals written in lexicon ASCII with `v`
/// for the umlaut vowel.
class PinyinInventory {
 public:
  PinyinInventory(std::vector<std::string> initials, std::vector<std::string> finals);
  static const PinyinInventory& standard();

  bool is_initial(const std::string& s) const { return initials_.count(s) > 0; }
  bool is_final(const std::string& s) const { return finals_.count(s) > 0; }
  const std::vector<std::string>& initials() const { return initial_list_; }
  const std::vector<std::string>& finals() const { return final_list_; }

 private:
  std::vector<std::string> initial_list_, final_list_;
  std::set<std::string> initials_, finals_;
};

struct Syllable {
  std::optional<std::string> initial;  // absent for zero-initial syllables
  std::string final_part;
  int tone = 0;  // 1..5, 5 = neutral tone

  std::string render() const;
  /// The phoneme strings this syllable contributes: initial (if any), then
  /// final-with-tone (e.g. "d", "a4").
  std::vector<std::string> phonemes() const;

  bool operator==(const Syllable& o) const = default;
  bool operator<(const Syllable& o) const {
    return render() < o.render();
  }
};

/// Longest-match initial split of a pinyin-with-tone string such as
/// "zhuang3". Throws std::invalid_argument naming the offending substring.
Syllable parse_syllable(const std::string& text,
                        const PinyinInventory& inventory = PinyinInventory::standard());

struct CDPhone {
  std::string left;    // phoneme or "sil"
  std::string center;  // phoneme
  std::string right;   // phoneme or "sil"

  std::string render() const;  // "sil-d+a4"
  static CDPhone parse(const std::string& text);
  bool operator==(const CDPhone& o) const = default;
};

// --- Lexicon ----------------------------------------------------------------

/// Chinese character -> ordered pronunciations. File format: one
/// `<char><TAB><syllable>` entry per line, `#` comments, repeated characters
/// append pronunciations, duplicate (char, syllable) pairs are rejected.
class Lexicon {
 public:
  void add(char32_t character, const Syllable& pron);
  static Lexicon load(const std::string& path,
                      const PinyinInventory& inventory = PinyinInventory::standard());
  static Lexicon parse(std::istream& in,
                       const PinyinInventory& inventory = PinyinInventory::standard());

  bool contains(char32_t character) const { return entries_.count(character) > 0; }
  const std::vector<Syllable>& pronunciations(char32_t character) const;
  size_t size() const { return entries_.size(); }
  const std::map<char32_t, std::vector<Syllable>>& entries() const { return entries_; }

  /// All distinct syllables derivable from the lexicon, sorted by rendering.
  std::vector<Syllable> all_syllables() const;
  /// Characters sharing a pronunciation, in lexicon insertion order.
  std::vector<char32_t> homophones(const Syllable& s) const;

 private:
  std::map<char32_t, std::vector<Syllable>> entries_;
  std::vector<char32_t> insertion_order_;
};

enum class PronPolicy { FirstPronunciation, AllLattice };

/// First-pronunciation: one syllable per character. Throws on characters the
/// lexicon does not cover, naming the character and its position.
std::vector<Syllable> char_to_syllables(const std::vector<char32_t>& sentence,
                                        const Lexicon& lex);
/// All-lattice: per-position candidate sets in lexicon order.
std::vector<std::vector<Syllable>> char_to_syllable_lattice(
    const std::vector<char32_t>& sentence, const Lexicon& lex);

/// Triphone expansion with `sil` context at both utterance edges.
std::vector<CDPhone> syllables_to_cdp(const std::vector<Syllable>& syllables);

// --- Vocabularies -----------------------------------------------------------

enum class UnitKind { CDP, Syllable, Character };
enum class ModelKind { CTC, Attention };

inline const char* kBlankSym = "<b>";
inline const char* kUnkSym = "<unk>";
inline const char* kSosSym = "<sos>";
inline const char* kEosSym = "<eos>";

class UnitVocabulary {
 public:
  UnitVocabulary() = default;
  /// Appends the special symbols for `model`: <b> for CTC; <unk>, <sos>,
  /// <eos> for attention. `units` must not already contain them.
  UnitVocabulary(UnitKind kind, ModelKind model, std::vector<std::string> units);

  UnitKind unit_kind() const { return unit_kind_; }
  ModelKind model_kind() const { return model_kind_; }
  int size() const { return static_cast<int>(units_.size()); }
  /// Count without special symbols.
  int content_size() const;
  const std::string& unit(int id) const { return units_[static_cast<size_t>(id)]; }
  const std::vector<std::string>& units() const { return units_; }
  int id_of(const std::string& unit) const;  // -1 when absent

  int blank_id() const { return blank_id_; }
  int unk_id() const { return unk_id_; }
  int sos_id() const { return sos_id_; }
  int eos_id() const { return eos_id_; }
  bool is_special(int id) const {
    return id == blank_id_ || id == unk_id_ || id == sos_id_ || id == eos_id_;
  }

  uint64_t fingerprint() const;

  void save(const std::string& path) const;
  static UnitVocabulary load(const std::string& path);
  void write(std::ostream& out) const;
  static UnitVocabulary read(std::istream& in);

 private:
  UnitKind unit_kind_ = UnitKind::Character;
  ModelKind model_kind_ = ModelKind::CTC;
  std::vector<std::string> units_;
  std::map<std::string, int> index_;
  int blank_id_ = -1, unk_id_ = -1, sos_id_ = -1, eos_id_ = -1;
};

struct VocabBuildResult {
  UnitVocabulary vocab;
  double coverage = 0.0;
};

/// Builds the unit inventory from transcripts (+ lexicon for syllable/CDP
/// kinds). Character kind keeps the `char_budget` most frequent characters,
/// ties broken by code point ascending; coverage is covered-token fraction.
/// `cdp_min_count` prunes rare triphones (CDP kind only).
VocabBuildResult build_vocabulary(const std::vector<std::string>& corpus, UnitKind kind,
                                  ModelKind model, const Lexicon& lex,
                                  int char_budget = 0, int cdp_min_count = 1);

/// Character-sequence transcript to label ids. OOV characters map to <unk>
/// for attention vocabularies and raise an error for CTC ones.
std::vector<int> encode_transcript(const std::string& text, const UnitVocabulary& vocab,
                                   const Lexicon& lex);

/// Tokenizes a transcript the way the training pipeline sees it: split on
/// whitespace if any, otherwise one token per code point.
std::vector<std::string> tokenize_transcript(const std::string& text);

}  // namespace e2e

#endif  // E2E_UNITS_HPP_
