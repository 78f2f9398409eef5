#pragma once

#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relex/errors.hpp"

namespace relex {

// ─── Prompt layout ──────────────────────────────────────────────────────────
//
// The model consumes a single flat token sequence:
//
//   [ENT] e1 ... [ENT] eK [REL] r1 ... [REL] rM [SEP] t0 t1 ... tN
//
// Each entity type label is introduced by an [ENT] marker, each relation
// label by a [REL] marker, and the text follows a single [SEP]. Multi-word
// labels occupy consecutive slots. The marker positions are what downstream
// heads read: the encoder state at the k-th [ENT] marker is the embedding of
// entity type k, and likewise for [REL].

enum class TokenKind {
    EntMarker,
    RelMarker,
    SepMarker,
    LabelWord,
    TextWord,
};

struct TokenUnit {
    TokenKind kind;
    std::string text; // marker surface for markers, the word otherwise
};

struct PromptLayout {
    std::vector<TokenUnit> tokens;
    std::vector<int> ent_delimiter_positions; // length K, strictly increasing
    std::vector<int> rel_delimiter_positions; // length M, all after the ent block
    int text_start = 0;                       // index of the first text word
    int word_count = 0;                       // text words retained after truncation
};

inline constexpr std::string_view kEntMarker = "[ENT]";
inline constexpr std::string_view kRelMarker = "[REL]";
inline constexpr std::string_view kSepMarker = "[SEP]";

/// Keeps the first `max_words` words; documents longer than the limit are cut
/// at the end, never windowed.
inline std::vector<std::string> truncate_words(const std::vector<std::string>& words,
                                               std::size_t max_words) {
    if (max_words == 0)
        throw ContractError("truncate_words: max_words must be positive");
    if (words.size() <= max_words)
        return words;
    return std::vector<std::string>(words.begin(),
                                    words.begin() + static_cast<std::ptrdiff_t>(max_words));
}

namespace detail {

inline std::vector<std::string> label_words(const std::string& label) {
    std::istringstream in(label);
    std::vector<std::string> out;
    std::string w;
    while (in >> w)
        out.push_back(w);
    return out;
}

} // namespace detail

/// Assembles the prompt sequence and records where every marker and the text
/// landed. `words` must already be truncated. Relation labels may be empty
/// (NER-only mode); entity labels may not.
inline PromptLayout build_prompt(const std::vector<std::string>& entity_labels,
                                 const std::vector<std::string>& relation_labels,
                                 const std::vector<std::string>& words) {
    if (entity_labels.empty())
        throw ConfigError("build_prompt: entity label set is empty; nothing to extract");

    PromptLayout layout;
    layout.tokens.reserve(words.size() + 2 * (entity_labels.size() + relation_labels.size()) + 1);

    auto append_labels = [&](const std::vector<std::string>& labels, TokenKind marker_kind,
                             std::string_view marker, std::vector<int>& positions) {
        for (const auto& label : labels) {
            auto pieces = detail::label_words(label);
            if (pieces.empty())
                throw ConfigError("build_prompt: blank label");
            positions.push_back(static_cast<int>(layout.tokens.size()));
            layout.tokens.push_back({marker_kind, std::string(marker)});
            for (auto& piece : pieces)
                layout.tokens.push_back({TokenKind::LabelWord, std::move(piece)});
        }
    };

    append_labels(entity_labels, TokenKind::EntMarker, kEntMarker,
                  layout.ent_delimiter_positions);
    append_labels(relation_labels, TokenKind::RelMarker, kRelMarker,
                  layout.rel_delimiter_positions);

    layout.tokens.push_back({TokenKind::SepMarker, std::string(kSepMarker)});
    layout.text_start = static_cast<int>(layout.tokens.size());
    for (const auto& w : words)
        layout.tokens.push_back({TokenKind::TextWord, w});
    layout.word_count = static_cast<int>(words.size());
    return layout;
}

/// Splits raw text into words for the extraction CLI: runs of word characters
/// (with internal hyphens/underscores) stay together, punctuation becomes its
/// own token. Annotated datasets carry pre-tokenized words and skip this.
inline std::vector<std::string> split_words(std::string_view text) {
    auto word_char = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
    };
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        if (word_char(text[i])) {
            while (i < text.size() && word_char(text[i]))
                ++i;
            while (i + 1 < text.size() && (text[i] == '-' || text[i] == '_') &&
                   word_char(text[i + 1])) {
                ++i;
                while (i < text.size() && word_char(text[i]))
                    ++i;
            }
        } else {
            ++i; // single punctuation character
        }
        words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

} // namespace relex
