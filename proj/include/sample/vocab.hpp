#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sample {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Token <-> id bijection with pinned specials. Ids 0..2 are <pad>, <unk>,
// <mask>; the next kSoftSlots ids are reserved soft-slot markers that prompt
// templates reference by slot index.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kMaskId = 2;
  static constexpr int kSoftSlots = 8;

  static const char* pad_token() { return "<pad>"; }
  static const char* unk_token() { return "<unk>"; }
  static const char* mask_token() { return "<mask>"; }
  static std::string soft_token(int slot) {
    return "<soft_" + std::to_string(slot + 1) + ">";
  }
  static int soft_id(int slot) { return kMaskId + 1 + slot; }
  static constexpr int first_word_id() { return kMaskId + 1 + kSoftSlots; }

  Vocab() {
    add(pad_token());
    add(unk_token());
    add(mask_token());
    for (int s = 0; s < kSoftSlots; ++s) add(soft_token(s));
  }

  int add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) {
      throw std::out_of_range("vocab: id " + std::to_string(id) + " outside 0.." +
                              std::to_string(size() - 1));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(lookup(w));
    return ids;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("vocab: cannot open " + path + " for writing");
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocab: cannot open " + path);
    Vocab v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const int id = static_cast<int>(v.tokens_.size());
      v.tokens_.push_back(line);
      v.index_.emplace(line, id);
    }
    if (v.size() <= kMaskId || v.tokens_[kPadId] != pad_token() ||
        v.tokens_[kUnkId] != unk_token() || v.tokens_[kMaskId] != mask_token()) {
      throw DataError("vocab: " + path + " does not pin <pad>=0, <unk>=1, <mask>=2");
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased whitespace split with edge punctuation stripped. Tokens wrapped
// in angle brackets (specials like <mask>) pass through untouched.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream stream(text);
  std::string raw;
  const std::string punct = ".,!?;:\"'()[]{}";
  while (stream >> raw) {
    if (raw.size() >= 2 && raw.front() == '<' && raw.back() == '>') {
      words.push_back(raw);
      continue;
    }
    std::size_t begin = 0, end = raw.size();
    while (begin < end && punct.find(raw[begin]) != std::string::npos) ++begin;
    while (end > begin && punct.find(raw[end - 1]) != std::string::npos) --end;
    if (begin == end) continue;
    std::string word = raw.substr(begin, end - begin);
    for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    words.push_back(std::move(word));
  }
  return words;
}

}  // namespace sample
