#include "solvuln/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>

#include <nlohmann/json.hpp>

#include "solvuln/errors.hpp"
#include "solvuln/hash.hpp"

namespace solvuln {

using nlohmann::json;

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}
bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

// End (exclusive) of a string literal opened at `start`; npos if unterminated.
std::size_t string_end(std::string_view s, std::size_t start) {
    const char quote = s[start];
    std::size_t j = start + 1;
    while (j < s.size()) {
        if (s[j] == '\\') {
            j += 2;
        } else if (s[j] == quote) {
            return j + 1;
        } else {
            ++j;
        }
    }
    return std::string_view::npos;
}

// Longest first, so the first prefix match is the maximal munch.
constexpr std::array<std::string_view, 26> kOperators{
    ">>>=", ">>>", "<<=", ">>=", "**", "==", "!=", "<=", ">=", "&&", "||", "++", "--",
    "+=",   "-=",  "*=",  "/=",  "%=", "|=", "&=", "^=", "=>", "->", "<<", ">>", ":="};

// Length of a valid UTF-8 sequence at `i`, or 0.
std::size_t utf8_length(std::string_view s, std::size_t i) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    if (lead >= 0xC2 && lead <= 0xDF) len = 2;
    else if (lead >= 0xE0 && lead <= 0xEF) len = 3;
    else if (lead >= 0xF0 && lead <= 0xF4) len = 4;
    else return 0;
    if (i + len > s.size()) return 0;
    for (std::size_t k = 1; k < len; ++k)
        if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return 0;
    return len;
}

std::string escape_whitespace(std::string_view literal) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(literal.size());
    for (char c : literal) {
        if (is_space(c)) {
            const auto b = static_cast<unsigned char>(c);
            out += "\\x";
            out.push_back(kHex[b >> 4]);
            out.push_back(kHex[b & 0xF]);
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

NormalizedSource normalize_source(std::string_view code) {
    NormalizedSource result;
    std::string& out = result.text;
    out.reserve(code.size());
    bool pending_space = false;

    auto emit = [&](std::string_view piece) {
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.append(piece);
    };

    std::size_t i = 0;
    while (i < code.size()) {
        const char c = code[i];
        if (is_space(c)) {
            pending_space = true;
            ++i;
        } else if (c == '/' && i + 1 < code.size() && code[i + 1] == '/') {
            while (i < code.size() && code[i] != '\n' && code[i] != '\r') ++i;
            pending_space = true;
        } else if (c == '/' && i + 1 < code.size() && code[i + 1] == '*') {
            const auto close = code.find("*/", i + 2);
            if (close == std::string_view::npos) {
                result.diagnostics.push_back({Diagnostic::Kind::UnterminatedComment, i});
                i = code.size();
            } else {
                i = close + 2;
            }
            pending_space = true;
        } else if (c == '"' || c == '\'') {
            auto end = string_end(code, i);
            if (end == std::string_view::npos) {
                result.diagnostics.push_back({Diagnostic::Kind::UnterminatedString, i});
                end = code.size();
            }
            emit(code.substr(i, std::min(end, code.size()) - i));
            i = end;
        } else {
            emit(code.substr(i, 1));
            ++i;
        }
    }
    return result;
}

TokenSequence tokenize(std::string_view s, std::string origin) {
    TokenSequence seq;
    seq.origin = std::move(origin);
    auto& tokens = seq.tokens;

    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (is_ident_start(c)) {
            std::size_t j = i + 1;
            while (j < s.size() && is_ident_char(s[j])) ++j;
            tokens.emplace_back(s.substr(i, j - i));
            i = j;
            continue;
        }
        if (is_digit(c)) {
            std::size_t j = i + 1;
            if (c == '0' && j + 1 < s.size() && (s[j] == 'x' || s[j] == 'X') && is_hex(s[j + 1])) {
                j += 1;
                while (j < s.size() && (is_hex(s[j]) || s[j] == '_')) ++j;
            } else {
                while (j < s.size() && (is_digit(s[j]) || s[j] == '_')) ++j;
                if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
                    j += 1;
                    while (j < s.size() && (is_digit(s[j]) || s[j] == '_')) ++j;
                }
                if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
                    std::size_t k = j + 1;
                    if (k < s.size() && (s[k] == '-' || s[k] == '+')) ++k;
                    if (k < s.size() && is_digit(s[k])) {
                        while (k < s.size() && is_digit(s[k])) ++k;
                        j = k;
                    }
                }
            }
            tokens.emplace_back(s.substr(i, j - i));
            i = j;
            continue;
        }
        if (c == '"' || c == '\'') {
            auto end = std::min(string_end(s, i), s.size());
            tokens.push_back(escape_whitespace(s.substr(i, end - i)));
            i = end;
            continue;
        }
        if (static_cast<unsigned char>(c) >= 0x80) {
            if (const auto len = utf8_length(s, i); len > 0) {
                tokens.emplace_back(s.substr(i, len));
                i += len;
            } else {
                tokens.emplace_back("\xEF\xBF\xBD");  // U+FFFD
                ++i;
            }
            continue;
        }
        bool matched = false;
        for (std::string_view op : kOperators) {
            if (s.substr(i, op.size()) == op) {
                tokens.emplace_back(op);
                i += op.size();
                matched = true;
                break;
            }
        }
        if (!matched) {
            tokens.emplace_back(1, c);
            ++i;
        }
    }
    return seq;
}

std::vector<std::string> subword_pieces(std::string_view token) {
    if (token.empty() || !is_ident_start(token[0])) return {std::string(token)};

    std::vector<std::string> raw;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) raw.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < token.size(); ++i) {
        const char c = token[i];
        if (c == '_' || c == '$') {
            flush();
            continue;
        }
        if (!current.empty()) {
            const char prev = current.back();
            const bool prev_lower = std::islower(static_cast<unsigned char>(prev)) != 0;
            const bool prev_upper = std::isupper(static_cast<unsigned char>(prev)) != 0;
            const bool cur_upper = std::isupper(static_cast<unsigned char>(c)) != 0;
            const bool next_lower = i + 1 < token.size() && std::islower(static_cast<unsigned char>(token[i + 1]));
            const bool boundary = (prev_lower && cur_upper) ||
                                  (is_digit(prev) != is_digit(c)) ||
                                  (prev_upper && cur_upper && next_lower);
            if (boundary) flush();
        }
        current.push_back(c);
    }
    flush();
    if (raw.empty()) return {std::string(token)};

    std::vector<std::string> pieces;
    pieces.reserve(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) pieces.push_back((k == 0 ? "" : "##") + lower(raw[k]));
    return pieces;
}

TokenSequence subword_tokenize(const TokenSequence& lexed) {
    TokenSequence out;
    out.origin = lexed.origin;
    for (const auto& t : lexed.tokens)
        for (auto& p : subword_pieces(t)) out.tokens.push_back(std::move(p));
    return out;
}

Vocab::Vocab(std::vector<std::string> specials, std::size_t max_size, std::size_t min_freq)
    : max_size_(max_size), min_freq_(min_freq) {
    for (auto& s : specials) add(s, 0);
    specials_ = lexemes_.size();
}

std::int32_t Vocab::add(const std::string& lexeme, std::size_t frequency) {
    if (auto it = ids_.find(lexeme); it != ids_.end()) return it->second;
    const auto id = static_cast<std::int32_t>(lexemes_.size());
    lexemes_.push_back(lexeme);
    freqs_.push_back(frequency);
    ids_.emplace(lexeme, id);
    return id;
}

std::int32_t Vocab::id(std::string_view lexeme) const {
    auto it = ids_.find(std::string(lexeme));
    return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(std::string_view lexeme) const { return ids_.count(std::string(lexeme)) != 0; }

std::string Vocab::to_json() const {
    json entries = json::array();
    for (std::size_t i = 0; i < lexemes_.size(); ++i)
        entries.push_back({{"id", i}, {"lexeme", lexemes_[i]}, {"freq", freqs_[i]}});
    json doc = {{"schema", "solvuln.vocab/v1"},
                {"max_size", max_size_},
                {"min_freq", min_freq_},
                {"num_specials", specials_},
                {"entries", std::move(entries)}};
    return doc.dump(1) + "\n";
}

Vocab Vocab::from_json(std::string_view text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("schema") != "solvuln.vocab/v1") throw Error(ErrorKind::SchemaError, "unsupported vocab schema");
        const auto& entries = doc.at("entries");
        const auto num_specials = doc.at("num_specials").get<std::size_t>();
        std::vector<std::string> specials;
        for (std::size_t i = 0; i < num_specials; ++i) specials.push_back(entries.at(i).at("lexeme").get<std::string>());
        Vocab v(std::move(specials), doc.at("max_size").get<std::size_t>(), doc.at("min_freq").get<std::size_t>());
        for (std::size_t i = num_specials; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (e.at("id").get<std::size_t>() != i) throw Error(ErrorKind::SchemaError, "vocab ids are not contiguous");
            v.add(e.at("lexeme").get<std::string>(), e.at("freq").get<std::size_t>());
        }
        if (v.size() != entries.size()) throw Error(ErrorKind::SchemaError, "duplicate lexeme in vocab");
        return v;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("vocab: ") + e.what());
    }
}

void Vocab::save(const std::filesystem::path& path) const { write_file(path, to_json()); }
Vocab Vocab::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

Vocab build_vocab(std::span<const TokenSequence> train_sequences, std::size_t max_size,
                  std::size_t min_freq, std::vector<std::string> specials) {
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : train_sequences)
        for (const auto& t : seq.tokens) ++counts[t];

    std::vector<std::pair<std::string, std::size_t>> kept;
    const std::size_t threshold = std::max<std::size_t>(min_freq, 1);
    for (auto& [lexeme, n] : counts)
        if (n >= threshold && std::find(specials.begin(), specials.end(), lexeme) == specials.end())
            kept.emplace_back(lexeme, n);
    // std::map iteration is already lexicographic, so a stable sort on count breaks ties by lexeme.
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (kept.size() > max_size) kept.resize(max_size);

    Vocab vocab(std::move(specials), max_size, min_freq);
    for (const auto& [lexeme, n] : kept) vocab.add(lexeme, n);
    return vocab;
}

EncodedSequence encode_sequence(const TokenSequence& seq, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 1) throw Error(ErrorKind::InvalidArgument, "max_len must be at least 1");
    EncodedSequence out;
    out.ids.assign(max_len, kPadId);
    out.true_length = std::min(seq.tokens.size(), max_len);
    for (std::size_t i = 0; i < out.true_length; ++i) out.ids[i] = vocab.id(seq.tokens[i]);
    return out;
}

std::string_view to_string(TokenizerKind kind) noexcept {
    return kind == TokenizerKind::Lexeme ? "lexeme" : "subword";
}

TextEncoder::TextEncoder(TokenizerKind kind, Vocab vocab, std::size_t max_len)
    : kind_(kind), vocab_(std::move(vocab)), max_len_(max_len) {
    if (max_len_ < 1) throw Error(ErrorKind::InvalidArgument, "max_len must be at least 1");
    if (kind_ == TokenizerKind::Subword && !vocab_.contains("[CLS]")) {
        throw Error(ErrorKind::VocabMismatch, "subword vocab lacks the [CLS] entry");
    }
}

std::vector<std::string> TextEncoder::specials_for(TokenizerKind kind) {
    if (kind == TokenizerKind::Subword) return {"[PAD]", "[UNK]", "[CLS]"};
    return Vocab::default_specials();
}

TokenSequence TextEncoder::tokens_for(TokenizerKind kind, std::string_view source, std::string origin) {
    TokenSequence lexed = tokenize(normalize_source(source).text, std::move(origin));
    if (kind == TokenizerKind::Lexeme) return lexed;
    return subword_tokenize(lexed);
}

EncodedSequence TextEncoder::encode(std::string_view source) const {
    TokenSequence seq = tokens_for(kind_, source);
    if (kind_ == TokenizerKind::Subword) seq.tokens.insert(seq.tokens.begin(), "[CLS]");
    return encode_sequence(seq, vocab_, max_len_);
}

}  // namespace solvuln
