#include "copydst/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace copydst {

static bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool is_special_token(const std::string& word) {
  return word == special::kUnk || word == special::kCls || word == special::kSep;
}

// Lowercased specials are folded back to their canonical uppercase form so
// that re-tokenizing joined output keeps them atomic.
static bool match_special(const std::string& chunk, std::string* canonical) {
  if (chunk.size() != 5 || chunk.front() != '[' || chunk.back() != ']') return false;
  std::string inner = chunk.substr(1, 3);
  for (char& c : inner) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (inner == "unk") { *canonical = special::kUnk; return true; }
  if (inner == "cls") { *canonical = special::kCls; return true; }
  if (inner == "sep") { *canonical = special::kSep; return true; }
  return false;
}

std::vector<std::string> basic_tokenize(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string chunk = text.substr(i, j - i);
    i = j;
    std::string canonical;
    if (match_special(chunk, &canonical)) {
      out.push_back(canonical);
      continue;
    }
    size_t k = 0;
    while (k < chunk.size()) {
      if (is_word_char(chunk[k])) {
        size_t e = k;
        std::string word;
        while (e < chunk.size() && is_word_char(chunk[e])) {
          word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(chunk[e]))));
          ++e;
        }
        out.push_back(word);
        k = e;
      } else {
        out.push_back(std::string(1, chunk[k]));
        ++k;
      }
    }
  }
  return out;
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  std::set<std::string> chars;
  for (const auto& text : texts) {
    for (const auto& w : basic_tokenize(text)) {
      if (is_special_token(w)) continue;
      words.insert(w);
      for (char c : w) chars.insert(std::string(1, c));
    }
  }
  Vocab v;
  v.pieces_.push_back(special::kUnk);
  v.pieces_.push_back(special::kCls);
  v.pieces_.push_back(special::kSep);
  for (const auto& w : words) v.pieces_.push_back(w);
  for (const auto& c : chars)
    if (!words.count(c)) v.pieces_.push_back(c);
  v.finish();
  return v;
}

Vocab Vocab::from_pieces(std::vector<std::string> pieces) {
  Vocab v;
  v.pieces_ = std::move(pieces);
  v.finish();
  return v;
}

void Vocab::finish() {
  index_.clear();
  max_piece_len_ = 1;
  for (size_t i = 0; i < pieces_.size(); ++i) {
    index_.emplace(pieces_[i], static_cast<int>(i));
    if (!is_special_token(pieces_[i]))
      max_piece_len_ = std::max(max_piece_len_, static_cast<int>(pieces_[i].size()));
  }
  auto it = index_.find(special::kUnk);
  unk_id_ = it == index_.end() ? 0 : it->second;
}

int Vocab::id(const std::string& piece) const {
  auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

void Tokenizer::split_word(const std::string& word, std::vector<Token>* out) const {
  size_t pos = 0;
  bool first = true;
  std::string unk_run;
  auto flush_unk = [&]() {
    if (unk_run.empty()) return;
    out->push_back(Token{special::kUnk, unk_run, first});
    first = false;
    unk_run.clear();
  };
  while (pos < word.size()) {
    const size_t remaining = word.size() - pos;
    size_t len = std::min<size_t>(remaining, vocab_->max_piece_len());
    size_t matched = 0;
    for (; len >= 1; --len) {
      if (vocab_->id(word.substr(pos, len)) >= 0) {
        matched = len;
        break;
      }
    }
    if (matched == 0) {
      unk_run.push_back(word[pos]);
      ++pos;
      continue;
    }
    flush_unk();
    out->push_back(Token{word.substr(pos, matched), word.substr(pos, matched), first});
    first = false;
    pos += matched;
  }
  flush_unk();
}

std::vector<Token> Tokenizer::tokenize(const std::string& text) const {
  std::vector<Token> out;
  for (const auto& word : basic_tokenize(text)) {
    if (is_special_token(word)) {
      out.push_back(Token{word, word, true});
      continue;
    }
    split_word(word, &out);
  }
  return out;
}

std::vector<std::string> Tokenizer::tokenize_pieces(const std::string& text) const {
  std::vector<std::string> out;
  for (const auto& t : tokenize(text)) out.push_back(t.piece);
  return out;
}

int Tokenizer::piece_id(const Token& t) const {
  const int id = vocab_->id(t.piece);
  return id < 0 ? vocab_->unk_id() : id;
}

}  // namespace copydst
