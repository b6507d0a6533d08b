#pragma once

#include <string_view>

// Versioned instruction headers, compiled in from data/templates/*_v1.txt.
// Each ends with a newline.
namespace mdqa::templates {

inline constexpr std::string_view kVersion = "v1";

extern const std::string_view kAggregationHeaderCot;
extern const std::string_view kAggregationHeaderPlain;
extern const std::string_view kDecompositionHeader;
extern const std::string_view kBootstrapHeader;

}  // namespace mdqa::templates
