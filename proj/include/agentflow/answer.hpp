#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "agentflow/message.hpp"

namespace agentflow {

// Content of the last outermost brace-balanced \boxed{...} group, or nullopt
// when the text contains no balanced group.
std::optional<std::string> extract_boxed_answer(std::string_view text);

// Canonical form used for vote equality and exact-match evaluation:
// trimmed, lowercased, internal whitespace collapsed, trailing periods
// removed. Numeric formats also drop thousands separators and leading zeros;
// list formats normalize item separators and only UnorderedList sorts.
// Idempotent for every input and format.
std::string canonicalize_answer(std::string_view answer,
                                std::optional<AnswerFormat> format = std::nullopt);

// Case-preserving reshaping of an answer to the expected format. Returns
// nullopt when the answer cannot be read in that format.
std::optional<std::string> conform_to_format(std::string_view answer, AnswerFormat format);

}  // namespace agentflow
