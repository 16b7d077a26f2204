#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "curbsight/geometry.hpp"

namespace curbsight::schema {

// Sentinel value an annotator may emit for any enumerated attribute it
// cannot decide; always accepted by validation.
inline constexpr const char* kUnknownValue = "unknown";

enum class AttributeKind { Enumerated, FreeText };

struct AttributeDef {
    std::string name;
    AttributeKind kind = AttributeKind::Enumerated;
    std::vector<std::string> allowed_values; // empty iff free-text
    std::map<std::string, std::string> synonyms; // alias -> canonical value

    // canonical value for v (case-insensitive match against allowed values
    // and synonym aliases); empty when v is out of vocabulary
    std::string canonical_value(std::string_view v) const;
};

struct CategoryDef {
    std::string name;
    std::vector<std::string> synonyms; // alternate labels (detector vocabularies etc.)
    std::vector<AttributeDef> attributes;

    const AttributeDef* find_attribute(std::string_view attr_name) const; // case-insensitive
};

struct AttributeSchema {
    int version = 1;
    std::vector<CategoryDef> categories; // file order preserved

    // case-insensitive lookup by name or category synonym
    const CategoryDef* find_category(std::string_view cat_name) const;
};

// Throw ConfigError with a path-tagged message on malformed input.
AttributeSchema parse_schema(const std::string& json_text);
AttributeSchema load_schema(const std::filesystem::path& path);

enum class RecordStatus { Ok, RepairApplied, Invalid };
std::string to_string(RecordStatus status);
RecordStatus status_from_string(std::string_view s); // throws Error on unknown status

struct AttributeValue {
    std::string name;
    std::string value;
    double confidence = 0.0;
};

struct StructuredObjectRecord {
    std::string object_id;
    std::string category;
    geometry::BoundingBox bbox; // panorama pixel space
    std::vector<AttributeValue> attributes;
    std::string source_image;
    RecordStatus status = RecordStatus::Ok;
    double detector_confidence = 1.0;
};

nlohmann::json record_to_json(const StructuredObjectRecord& record);
StructuredObjectRecord record_from_json(const nlohmann::json& j); // throws Error

struct Violation {
    std::string path;    // e.g. "attributes[2].value"
    std::string code;    // unknown-category | unknown-attribute | invalid-value |
                         // confidence-range | duplicate-attribute
    std::string message;
};

struct ValidationReport {
    bool valid = true;
    std::vector<Violation> violations;
};

// Pure; enumerates every violation. Values are checked after (non-mutating)
// case/synonym normalization, and "unknown" always passes.
ValidationReport validate_record(const StructuredObjectRecord& record,
                                 const AttributeSchema& schema);

// Canonicalize category/attribute/value spellings in place.
// Returns true when anything changed.
bool normalize_record(StructuredObjectRecord& record, const AttributeSchema& schema);

// Pull the first parseable balanced brace block out of raw model text and
// coerce it into a schema-conformant record: canonicalize spellings, drop
// attributes the category does not declare, blank out-of-vocabulary
// enumerated values to "unknown", and fill declared-but-missing attributes
// with "unknown" at confidence 0. status = ok when the block needed no
// touch-up, repair_applied otherwise. Identification fields (object_id,
// bbox, source_image) are left for the caller.
// Throws Error when no block parses or the block lacks a usable category.
StructuredObjectRecord extract_and_repair(const std::string& raw, const AttributeSchema& schema,
                                          const std::string& expected_category);

} // namespace curbsight::schema
