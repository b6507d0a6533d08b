#pragma once

// JSON record mappings shared by the on-disk formats.

#include <json.hpp>

#include <string>
#include <string_view>

#include "mdqa/corpus.hpp"

namespace mdqa {

using Json = nlohmann::json;

/// Required string field; throws DataError naming the field otherwise.
std::string require_string(const Json& record, std::string_view field);

Json to_json(const Article& article);
Json to_json(const Passage& passage);
Json to_json(const QaInstance& instance);

Article article_from_json(const Json& record);
Passage passage_from_json(const Json& record);
QaInstance qa_instance_from_json(const Json& record);

/// Compact single-line dump with stable key order and UTF-8 passthrough.
std::string dump_line(const Json& record);

}  // namespace mdqa
