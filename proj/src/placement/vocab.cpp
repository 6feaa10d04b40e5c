#include "touchadd/placement/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "touchadd/datagen.hpp"
#include "touchadd/touchprior.hpp"

namespace touchadd::placement {

namespace {

constexpr const char* kSpecialNames[kNumSpecial] = {"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
constexpr char kAxisLetter[4] = {'X', 'Y', 'W', 'H'};

bool is_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

}  // namespace

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  std::set<std::string> unique(words.begin(), words.end());
  Vocabulary v;
  for (const char* s : kSpecialNames) v.tokens_.emplace_back(s);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < kCoordBins; ++b) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "<%c_%02d>", kAxisLetter[a], b);
      v.tokens_.emplace_back(buf);
    }
  }
  for (const auto& w : unique) {
    if (w.empty()) continue;
    if (w.front() == '<' && w.back() == '>') throw TokenizerError("reserved token form: " + w);
    v.tokens_.push_back(w);
  }
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) v.index_.emplace(v.tokens_[i], i);
  return v;
}

Vocabulary Vocabulary::standard() {
  std::vector<std::string> words = datagen::grammar_words();
  for (auto& w : split_words(build_prompt("x"))) words.push_back(std::move(w));
  words.erase(std::remove(words.begin(), words.end(), "x"), words.end());
  return from_words(std::move(words));
}

int Vocabulary::id(std::string_view token) const noexcept {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw TokenizerError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::coord_token(CoordAxis axis, int bin) const {
  if (bin < 0 || bin >= kCoordBins) throw TokenizerError("coordinate bin out of range");
  return kNumSpecial + static_cast<int>(axis) * kCoordBins + bin;
}

CoordAxis Vocabulary::coord_axis(int id) const {
  if (!is_coord(id)) throw TokenizerError("not a coordinate token");
  return static_cast<CoordAxis>((id - kNumSpecial) / kCoordBins);
}

int Vocabulary::coord_bin(int id) const {
  if (!is_coord(id)) throw TokenizerError("not a coordinate token");
  return (id - kNumSpecial) % kCoordBins;
}

std::vector<std::string> Vocabulary::split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view chunk = text.substr(i, j - i);
    std::vector<std::string> trailing;
    while (!chunk.empty() && is_punct(chunk.front())) {
      out.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    while (!chunk.empty() && is_punct(chunk.back())) {
      trailing.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }
    if (!chunk.empty()) out.emplace_back(chunk);
    out.insert(out.end(), trailing.rbegin(), trailing.rend());
    i = j;
  }
  return out;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < kNumSpecial || is_coord(id) || id >= size()) continue;
    const std::string& w = tokens_[static_cast<std::size_t>(id)];
    const bool punct = w.size() == 1 && is_punct(w[0]);
    if (!out.empty() && !punct) out.push_back(' ');
    out += w;
  }
  return out;
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + kNumSpecial + 4 * kCoordBins, tokens_.end()};
}

TokenSequence encode_prompt(std::string_view instruction, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.ids.push_back(kBos);
  seq.roles.push_back(TokenRole::kSpecial);
  for (int id : vocab.tokenize(build_prompt(instruction))) {
    seq.ids.push_back(id);
    seq.roles.push_back(TokenRole::kPrompt);
  }
  return seq;
}

TokenSequence encode_response(std::string_view reasoning, const NormalizedBBox& bbox,
                              const Vocabulary& vocab, bool training) {
  if (!bbox.valid()) throw TokenizerError("cannot encode an invalid box");
  TokenSequence seq;
  for (int id : vocab.tokenize(reasoning)) {
    if (training && id == kUnk)
      throw TokenizerError("reasoning contains words outside the vocabulary: " + std::string(reasoning));
    seq.ids.push_back(id);
    seq.roles.push_back(TokenRole::kReasoning);
  }
  seq.ids.push_back(kSep);
  seq.roles.push_back(TokenRole::kSpecial);
  const double coords[4] = {bbox.x_c, bbox.y_c, bbox.w, bbox.h};
  for (int a = 0; a < 4; ++a) {
    seq.ids.push_back(vocab.coord_token(static_cast<CoordAxis>(a), quantize_coord(coords[a])));
    seq.roles.push_back(TokenRole::kCoordinate);
  }
  seq.ids.push_back(kEos);
  seq.roles.push_back(TokenRole::kSpecial);
  return seq;
}

DecodedResponse decode_response(std::span<const int> ids, const Vocabulary& vocab) {
  DecodedResponse out;
  std::size_t text_end = ids.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kSep || ids[i] == kEos || vocab.is_coord(ids[i])) {
      text_end = i;
      break;
    }
  }
  out.reasoning = vocab.detokenize(ids.subspan(0, text_end));

  for (std::size_t i = ids.size(); i >= 4; --i) {
    const std::size_t s = i - 4;
    bool ordered = true;
    for (int a = 0; a < 4 && ordered; ++a) {
      const int id = ids[s + static_cast<std::size_t>(a)];
      ordered = vocab.is_coord(id) && vocab.coord_axis(id) == static_cast<CoordAxis>(a);
    }
    if (!ordered) continue;
    double v[4];
    for (int a = 0; a < 4; ++a) v[a] = dequantize_coord(vocab.coord_bin(ids[s + static_cast<std::size_t>(a)]));
    out.bbox = NormalizedBBox{v[0], v[1], v[2], v[3]};
    break;
  }
  return out;
}

}  // namespace touchadd::placement
