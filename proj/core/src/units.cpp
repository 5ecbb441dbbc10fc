// Copyright 2026 the e2e-asr authors
// Licensed under the Apache License, Version 2.0

#include "e2e/units.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

namespace e2e {

// --- UTF-8 -------------------------------------------------------------------

std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    int len = 0;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      len = 4;
    } else {
      throw std::invalid_argument("invalid UTF-8 byte at offset " + std::to_string(i));
    }
    if (i + static_cast<size_t>(len) > s.size())
      throw std::invalid_argument("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (int k = 1; k < len; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
      if ((cc & 0xC0) != 0x80)
        throw std::invalid_argument("invalid UTF-8 continuation at offset " +
                                    std::to_string(i + static_cast<size_t>(k)));
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += static_cast<size_t>(len);
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  for (char32_t cp : cps) out += utf8_encode(cp);
  return out;
}

bool is_han(char32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F);
}

// --- Pinyin -------------------------------------------------------------------

PinyinInventory::PinyinInventory(std::vector<std::string> initials,
                                 std::vector<std::string> finals)
    : initial_list_(std::move(initials)),
      final_list_(std::move(finals)),
      initials_(initial_list_.begin(), initial_list_.end()),
      finals_(final_list_.begin(), final_list_.end()) {}

const PinyinInventory& PinyinInventory::standard() {
  // The 23 initials of the official phonetic alphabet scheme; finals in
  // lexicon ASCII with `v` for the umlaut vowel.
  static const PinyinInventory inv(
      {"b", "p", "m", "f", "d", "t",  "n",  "l",  "g", "k", "h", "j",
       "q", "x", "zh", "ch", "sh", "r", "z", "c", "s", "y", "w"},
      {"a",   "o",   "e",   "i",    "u",    "v",    "ai",   "ei",  "ui",
       "ao",  "ou",  "iu",  "ie",   "ve",   "er",   "an",   "en",  "in",
       "un",  "vn",  "ang", "eng",  "ing",  "ong",  "ia",   "iao", "ian",
       "iang", "iong", "ua", "uo",  "uai",  "uan",  "uang", "ueng", "uen"});
  return inv;
}

std::string Syllable::render() const {
  std::string out = initial.value_or("");
  out += final_part;
  out += static_cast<char>('0' + tone);
  return out;
}

std::vector<std::string> Syllable::phonemes() const {
  std::vector<std::string> out;
  if (initial) out.push_back(*initial);
  out.push_back(final_part + static_cast<char>('0' + tone));
  return out;
}

Syllable parse_syllable(const std::string& text, const PinyinInventory& inventory) {
  if (text.empty()) throw std::invalid_argument("empty syllable");
  const char last = text.back();
  if (last < '1' || last > '5')
    throw std::invalid_argument("missing or illegal tone digit in \"" + text + "\"");
  const std::string body = text.substr(0, text.size() - 1);
  if (body.empty()) throw std::invalid_argument("syllable \"" + text + "\" has no letters");
  for (char c : body)
    if (!std::islower(static_cast<unsigned char>(c)))
      throw std::invalid_argument("illegal character '" + std::string(1, c) + "' in \"" +
                                  text + "\"");
  const int tone = last - '0';

  // longest-match initial split, zero-initial as the fallback
  const size_t max_init = std::min<size_t>(body.size() - 1, 2);
  for (size_t len = max_init; len >= 1; --len) {
    const std::string head = body.substr(0, len);
    if (inventory.is_initial(head) && inventory.is_final(body.substr(len)))
      return Syllable{head, body.substr(len), tone};
  }
  if (inventory.is_final(body)) return Syllable{std::nullopt, body, tone};
  for (size_t len = max_init; len >= 1; --len)
    if (inventory.is_initial(body.substr(0, len)))
      throw std::invalid_argument("unknown final \"" + body.substr(len) + "\" in \"" + text +
                                  "\"");
  throw std::invalid_argument("unknown final \"" + body + "\" in \"" + text + "\"");
}

std::string CDPhone::render() const { return left + "-" + center + "+" + right; }

CDPhone CDPhone::parse(const std::string& text) {
  const auto dash = text.find('-');
  const auto plus = text.find('+', dash == std::string::npos ? 0 : dash + 1);
  if (dash == std::string::npos || plus == std::string::npos || dash == 0 ||
      plus <= dash + 1 || plus + 1 >= text.size())
    throw std::invalid_argument("bad context-dependent phoneme \"" + text + "\"");
  return CDPhone{text.substr(0, dash), text.substr(dash + 1, plus - dash - 1),
                 text.substr(plus + 1)};
}

// --- Lexicon ------------------------------------------------------------------

void Lexicon::add(char32_t character, const Syllable& pron) {
  if (!is_han(character))
    throw std::invalid_argument("lexicon entry \"" + utf8_encode(character) +
                                "\" is not a Han character");
  auto& prons = entries_[character];
  for (const auto& p : prons)
    if (p == pron)
      throw std::invalid_argument("duplicate lexicon entry " + utf8_encode(character) + " " +
                                  pron.render());
  if (prons.empty()) insertion_order_.push_back(character);
  prons.push_back(pron);
}

Lexicon Lexicon::parse(std::istream& in, const PinyinInventory& inventory) {
  Lexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::invalid_argument("lexicon line " + std::to_string(lineno) +
                                  ": missing TAB separator");
    const auto chars = utf8_decode(line.substr(0, tab));
    if (chars.size() != 1)
      throw std::invalid_argument("lexicon line " + std::to_string(lineno) +
                                  ": key must be a single character");
    lex.add(chars[0], parse_syllable(line.substr(tab + 1), inventory));
  }
  return lex;
}

Lexicon Lexicon::load(const std::string& path, const PinyinInventory& inventory) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon: " + path);
  return parse(in, inventory);
}

const std::vector<Syllable>& Lexicon::pronunciations(char32_t character) const {
  auto it = entries_.find(character);
  if (it == entries_.end())
    throw std::invalid_argument("character " + utf8_encode(character) + " not in lexicon");
  return it->second;
}

std::vector<Syllable> Lexicon::all_syllables() const {
  std::set<std::string> seen;
  std::vector<Syllable> out;
  for (const auto& [ch, prons] : entries_)
    for (const auto& p : prons)
      if (seen.insert(p.render()).second) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<char32_t> Lexicon::homophones(const Syllable& s) const {
  std::vector<char32_t> out;
  for (char32_t ch : insertion_order_) {
    const auto& prons = entries_.at(ch);
    if (std::find(prons.begin(), prons.end(), s) != prons.end()) out.push_back(ch);
  }
  return out;
}

std::vector<Syllable> char_to_syllables(const std::vector<char32_t>& sentence,
                                        const Lexicon& lex) {
  std::vector<Syllable> out;
  for (size_t i = 0; i < sentence.size(); ++i) {
    if (!lex.contains(sentence[i]))
      throw std::invalid_argument("character " + utf8_encode(sentence[i]) + " at position " +
                                  std::to_string(i) + " not covered by the lexicon");
    out.push_back(lex.pronunciations(sentence[i]).front());
  }
  return out;
}

std::vector<std::vector<Syllable>> char_to_syllable_lattice(
    const std::vector<char32_t>& sentence, const Lexicon& lex) {
  std::vector<std::vector<Syllable>> out;
  for (size_t i = 0; i < sentence.size(); ++i) {
    if (!lex.contains(sentence[i]))
      throw std::invalid_argument("character " + utf8_encode(sentence[i]) + " at position " +
                                  std::to_string(i) + " not covered by the lexicon");
    out.push_back(lex.pronunciations(sentence[i]));
  }
  return out;
}

std::vector<CDPhone> syllables_to_cdp(const std::vector<Syllable>& syllables) {
  if (syllables.empty()) throw std::invalid_argument("empty syllable sequence");
  std::vector<std::string> phones;
  for (const auto& s : syllables)
    for (const auto& p : s.phonemes()) phones.push_back(p);
  std::vector<CDPhone> out;
  for (size_t i = 0; i < phones.size(); ++i) {
    out.push_back(CDPhone{i == 0 ? "sil" : phones[i - 1], phones[i],
                          i + 1 == phones.size() ? "sil" : phones[i + 1]});
  }
  return out;
}

// --- UnitVocabulary -----------------------------------------------------------

static const char* unit_kind_name(UnitKind k) {
  switch (k) {
    case UnitKind::CDP:
      return "CDP";
    case UnitKind::Syllable:
      return "Syllable";
    case UnitKind::Character:
      return "Character";
  }
  return "?";
}

static const char* model_kind_name(ModelKind k) {
  return k == ModelKind::CTC ? "CTC" : "Attention";
}

UnitVocabulary::UnitVocabulary(UnitKind kind, ModelKind model,
                               std::vector<std::string> units)
    : unit_kind_(kind), model_kind_(model), units_(std::move(units)) {
  for (const auto& u : units_)
    if (u == kBlankSym || u == kUnkSym || u == kSosSym || u == kEosSym)
      throw std::invalid_argument("unit list may not contain special symbol " + u);
  if (model_kind_ == ModelKind::CTC) {
    blank_id_ = static_cast<int>(units_.size());
    units_.push_back(kBlankSym);
  } else {
    unk_id_ = static_cast<int>(units_.size());
    units_.push_back(kUnkSym);
    sos_id_ = static_cast<int>(units_.size());
    units_.push_back(kSosSym);
    eos_id_ = static_cast<int>(units_.size());
    units_.push_back(kEosSym);
  }
  for (size_t i = 0; i < units_.size(); ++i) {
    if (!index_.emplace(units_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate unit \"" + units_[i] + "\"");
  }
}

int UnitVocabulary::content_size() const {
  return size() - (model_kind_ == ModelKind::CTC ? 1 : 3);
}

int UnitVocabulary::id_of(const std::string& unit) const {
  auto it = index_.find(unit);
  return it == index_.end() ? -1 : it->second;
}

uint64_t UnitVocabulary::fingerprint() const {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xFFu;
    h *= 1099511628211ULL;
  };
  mix(unit_kind_name(unit_kind_));
  mix(model_kind_name(model_kind_));
  for (const auto& u : units_) mix(u);
  return h;
}

void UnitVocabulary::write(std::ostream& out) const {
  out << "#kind=" << unit_kind_name(unit_kind_) << " model=" << model_kind_name(model_kind_)
      << "\n";
  for (const auto& u : units_) out << u << "\n";
}

void UnitVocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  write(out);
}

UnitVocabulary UnitVocabulary::read(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#kind=", 0) != 0)
    throw std::runtime_error("vocabulary file missing #kind header");
  std::istringstream hs(header.substr(1));
  std::string kind_field, model_field;
  hs >> kind_field >> model_field;
  auto value_of = [](const std::string& field, const std::string& key) {
    if (field.rfind(key + "=", 0) != 0)
      throw std::runtime_error("bad vocabulary header field: " + field);
    return field.substr(key.size() + 1);
  };
  const std::string kind_s = value_of(kind_field, "kind");
  const std::string model_s = value_of(model_field, "model");
  UnitKind kind;
  if (kind_s == "CDP")
    kind = UnitKind::CDP;
  else if (kind_s == "Syllable")
    kind = UnitKind::Syllable;
  else if (kind_s == "Character")
    kind = UnitKind::Character;
  else
    throw std::runtime_error("unknown unit kind: " + kind_s);
  ModelKind model;
  if (model_s == "CTC")
    model = ModelKind::CTC;
  else if (model_s == "Attention")
    model = ModelKind::Attention;
  else
    throw std::runtime_error("unknown model kind: " + model_s);

  std::vector<std::string> units;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    units.push_back(line);
  }
  // strip the stored special symbols; the constructor re-appends them
  const size_t specials = model == ModelKind::CTC ? 1 : 3;
  if (units.size() < specials)
    throw std::runtime_error("vocabulary file too short for its special symbols");
  units.resize(units.size() - specials);
  return UnitVocabulary(kind, model, std::move(units));
}

UnitVocabulary UnitVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  return read(in);
}

// --- build_vocabulary ----------------------------------------------------------

std::vector<std::string> tokenize_transcript(const std::string& text) {
  if (text.find_first_of(" \t") != std::string::npos) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }
  std::vector<std::string> out;
  for (char32_t cp : utf8_decode(text)) out.push_back(utf8_encode(cp));
  return out;
}

VocabBuildResult build_vocabulary(const std::vector<std::string>& corpus, UnitKind kind,
                                  ModelKind model, const Lexicon& lex, int char_budget,
                                  int cdp_min_count) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  VocabBuildResult res;

  if (kind == UnitKind::Character) {
    std::map<std::string, int64_t> counts;
    int64_t total = 0;
    for (const auto& line : corpus)
      for (const auto& tok : tokenize_transcript(line)) {
        ++counts[tok];
        ++total;
      }
    if (total == 0) throw std::invalid_argument("empty corpus");
    std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
    // most frequent first; ties by code point (string) ascending
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const size_t keep =
        char_budget > 0 ? std::min<size_t>(items.size(), static_cast<size_t>(char_budget))
                        : items.size();
    int64_t covered = 0;
    std::vector<std::string> units;
    for (size_t i = 0; i < keep; ++i) {
      units.push_back(items[i].first);
      covered += items[i].second;
    }
    std::sort(units.begin(), units.end());
    res.vocab = UnitVocabulary(kind, model, std::move(units));
    res.coverage = static_cast<double>(covered) / static_cast<double>(total);
    return res;
  }

  if (kind == UnitKind::Syllable) {
    std::vector<std::string> units;
    for (const auto& s : lex.all_syllables()) units.push_back(s.render());
    int64_t total = 0, covered = 0;
    for (const auto& line : corpus)
      for (char32_t cp : utf8_decode(line)) {
        ++total;
        if (lex.contains(cp)) ++covered;
      }
    res.vocab = UnitVocabulary(kind, model, std::move(units));
    res.coverage = total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
    return res;
  }

  // CDP: triphones observed in the corpus, pruned by min count
  std::map<std::string, int64_t> counts;
  int64_t total = 0;
  for (const auto& line : corpus) {
    const auto chars = utf8_decode(line);
    if (chars.empty()) continue;
    bool covered_line = true;
    for (char32_t cp : chars)
      if (!lex.contains(cp)) {
        covered_line = false;
        break;
      }
    if (!covered_line) continue;
    for (const auto& cdp : syllables_to_cdp(char_to_syllables(chars, lex))) {
      ++counts[cdp.render()];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no lexicon-covered transcripts in corpus");
  int64_t covered = 0;
  std::vector<std::string> units;
  for (const auto& [u, c] : counts)
    if (c >= cdp_min_count) {
      units.push_back(u);
      covered += c;
    }
  res.vocab = UnitVocabulary(kind, model, std::move(units));
  res.coverage = static_cast<double>(covered) / static_cast<double>(total);
  return res;
}

std::vector<int> encode_transcript(const std::string& text, const UnitVocabulary& vocab,
                                   const Lexicon& lex) {
  std::vector<char32_t> chars;
  for (char32_t cp : utf8_decode(text))
    if (cp != U' ' && cp != U'\t') chars.push_back(cp);
  std::vector<std::string> unit_strings;
  switch (vocab.unit_kind()) {
    case UnitKind::Character:
      unit_strings = tokenize_transcript(text);
      break;
    case UnitKind::Syllable:
      for (const auto& s : char_to_syllables(chars, lex)) unit_strings.push_back(s.render());
      break;
    case UnitKind::CDP:
      for (const auto& p : syllables_to_cdp(char_to_syllables(chars, lex)))
        unit_strings.push_back(p.render());
      break;
  }
  std::vector<int> ids;
  for (size_t i = 0; i < unit_strings.size(); ++i) {
    const int id = vocab.id_of(unit_strings[i]);
    if (id >= 0) {
      ids.push_back(id);
      continue;
    }
    if (vocab.model_kind() == ModelKind::Attention) {
      ids.push_back(vocab.unk_id());
    } else {
      throw std::invalid_argument("out-of-vocabulary unit \"" + unit_strings[i] +
                                  "\" at position " + std::to_string(i));
    }
  }
  return ids;
}

}  // namespace e2e
