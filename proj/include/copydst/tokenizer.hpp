#pragma once

#include <map>
#include <string>
#include <vector>

namespace copydst {

namespace special {
inline constexpr const char* kUnk = "[UNK]";
inline constexpr const char* kCls = "[CLS]";
inline constexpr const char* kSep = "[SEP]";
}  // namespace special

// One subword piece. `piece` is the vocabulary entry ("[UNK]" for
// out-of-vocabulary fragments); `surface` is the literal text fragment it
// came from, kept so spans can be decoded back to the original words.
struct Token {
  std::string piece;
  std::string surface;
  bool word_begin = true;
};

// Word-level pass: lowercase, split on whitespace, detach punctuation as
// single-character tokens. Special tokens pass through atomically in
// canonical uppercase form. Total and deterministic.
std::vector<std::string> basic_tokenize(const std::string& text);

bool is_special_token(const std::string& word);

// Subword vocabulary built from a training split: special tokens, then all
// words, then all single characters seen in the split.
class Vocab {
 public:
  Vocab() = default;
  static Vocab build(const std::vector<std::string>& texts);
  static Vocab from_pieces(std::vector<std::string> pieces);

  int id(const std::string& piece) const;  // -1 when absent
  int unk_id() const { return unk_id_; }
  const std::string& piece(int id) const { return pieces_[id]; }
  int size() const { return static_cast<int>(pieces_.size()); }
  int max_piece_len() const { return max_piece_len_; }
  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  void finish();
  std::vector<std::string> pieces_;
  std::map<std::string, int> index_;
  int unk_id_ = 0;
  int max_piece_len_ = 1;
};

// Greedy longest-match subword tokenizer over a fixed vocabulary.
// Idempotent on the whitespace-joined output of a previous run.
class Tokenizer {
 public:
  explicit Tokenizer(const Vocab* vocab) : vocab_(vocab) {}

  std::vector<Token> tokenize(const std::string& text) const;
  // Piece strings only, the plain-token view of tokenize().
  std::vector<std::string> tokenize_pieces(const std::string& text) const;
  int piece_id(const Token& t) const;
  const Vocab& vocab() const { return *vocab_; }

 private:
  void split_word(const std::string& word, std::vector<Token>* out) const;
  const Vocab* vocab_;
};

}  // namespace copydst
