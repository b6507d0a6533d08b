#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

#include "mdqa/text.hpp"

namespace mdqa {

/// Estimated model tokens for a piece of text.
using TokenCounter = std::function<std::size_t(std::string_view)>;

/// ceil(characters / 4), counting UTF-8 code points.
inline std::size_t estimate_tokens(std::string_view s) { return (text::utf8_length(s) + 3) / 4; }

inline TokenCounter default_token_counter() { return estimate_tokens; }

}  // namespace mdqa
