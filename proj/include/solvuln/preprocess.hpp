#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace solvuln {

struct Diagnostic {
    enum class Kind { UnterminatedComment, UnterminatedString };
    Kind kind;
    std::size_t offset;  // byte offset of the opening delimiter in the input
};

struct NormalizedSource {
    std::string text;
    std::vector<Diagnostic> diagnostics;

    bool has_warning() const noexcept { return !diagnostics.empty(); }
};

/// Strips `//` and `/* */` comments outside string literals, unifies line
/// endings and collapses whitespace runs to one space. String literals are
/// copied verbatim. Idempotent. Unterminated comments or strings are reported
/// as diagnostics; the output is still produced.
NormalizedSource normalize_source(std::string_view code);

struct TokenSequence {
    std::vector<std::string> tokens;
    std::string origin;
};

/// Maximal-munch Solidity lexer. String literals are one token, with any
/// whitespace inside them rewritten to the equivalent `\xNN` escape so no token
/// contains whitespace. Bytes that start no lexeme become single-character
/// tokens; invalid UTF-8 bytes become U+FFFD.
TokenSequence tokenize(std::string_view code, std::string origin = {});

/// Splits identifiers at underscores, camelCase humps and letter/digit
/// boundaries, lower-casing the pieces; continuation pieces get a `##` prefix.
/// Non-identifier tokens pass through unchanged.
std::vector<std::string> subword_pieces(std::string_view token);
TokenSequence subword_tokenize(const TokenSequence& lexed);

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

class Vocab {
public:
    static std::vector<std::string> default_specials() { return {"<pad>", "<unk>"}; }

    Vocab() : Vocab(default_specials()) {}
    explicit Vocab(std::vector<std::string> specials, std::size_t max_size = 0, std::size_t min_freq = 1);

    /// Appends a lexeme with its training frequency; returns its id.
    std::int32_t add(const std::string& lexeme, std::size_t frequency);

    std::int32_t id(std::string_view lexeme) const;  // kUnkId when absent
    bool contains(std::string_view lexeme) const;
    const std::string& lexeme(std::int32_t id) const { return lexemes_.at(static_cast<std::size_t>(id)); }
    std::size_t frequency(std::int32_t id) const { return freqs_.at(static_cast<std::size_t>(id)); }

    std::size_t size() const noexcept { return lexemes_.size(); }
    std::size_t num_specials() const noexcept { return specials_; }
    std::size_t max_size() const noexcept { return max_size_; }
    std::size_t min_freq() const noexcept { return min_freq_; }

    std::string to_json() const;
    static Vocab from_json(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    friend bool operator==(const Vocab& a, const Vocab& b) {
        return a.lexemes_ == b.lexemes_ && a.freqs_ == b.freqs_ && a.specials_ == b.specials_ &&
               a.max_size_ == b.max_size_ && a.min_freq_ == b.min_freq_;
    }

private:
    std::vector<std::string> lexemes_;
    std::vector<std::size_t> freqs_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::size_t specials_ = 0;
    std::size_t max_size_ = 0;
    std::size_t min_freq_ = 1;
};

/// Keeps lexemes seen at least `min_freq` times, most frequent first (ties
/// lexicographic), at most `max_size` of them, after the special entries.
Vocab build_vocab(std::span<const TokenSequence> train_sequences, std::size_t max_size,
                  std::size_t min_freq, std::vector<std::string> specials = Vocab::default_specials());

struct EncodedSequence {
    std::vector<std::int32_t> ids;
    std::size_t true_length = 0;

    friend bool operator==(const EncodedSequence&, const EncodedSequence&) = default;
};

/// Maps through the vocab (missing -> UNK), keeps the head, right-pads with PAD.
EncodedSequence encode_sequence(const TokenSequence& seq, const Vocab& vocab, std::size_t max_len);

/// How raw source is turned into model input. Lexeme mode is the recurrent
/// pipeline; Subword mode prepends a `[CLS]` token to subword pieces for the
/// encoder models.
enum class TokenizerKind { Lexeme, Subword };

inline constexpr std::size_t kDefaultMaxVocab = 20000;
inline constexpr std::size_t kDefaultMinFreq = 2;
inline constexpr std::size_t kDefaultMaxLen = 512;

class TextEncoder {
public:
    TextEncoder(TokenizerKind kind, Vocab vocab, std::size_t max_len);

    /// Vocab-building helper: tokens of `source` in this encoder's mode.
    static TokenSequence tokens_for(TokenizerKind kind, std::string_view source, std::string origin = {});
    static std::vector<std::string> specials_for(TokenizerKind kind);

    EncodedSequence encode(std::string_view source) const;

    TokenizerKind kind() const noexcept { return kind_; }
    const Vocab& vocab() const noexcept { return vocab_; }
    std::size_t max_len() const noexcept { return max_len_; }

private:
    TokenizerKind kind_;
    Vocab vocab_;
    std::size_t max_len_;
};

std::string_view to_string(TokenizerKind kind) noexcept;

}  // namespace solvuln
