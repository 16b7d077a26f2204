#include "curbsight/schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "curbsight/error.hpp"

namespace curbsight::schema {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool iequal(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
               return std::tolower(x) == std::tolower(y);
           });
}

const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                    const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + ": missing field '" + key + "'");
    return *it;
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& path) {
    const auto& v = require_field(j, key, path);
    if (!v.is_string() || v.get<std::string>().empty()) {
        throw ConfigError(path + "." + key + ": expected a non-empty string");
    }
    return v.get<std::string>();
}

} // namespace

std::string AttributeDef::canonical_value(std::string_view v) const {
    if (kind == AttributeKind::FreeText) return std::string(v);
    if (iequal(v, kUnknownValue)) return kUnknownValue;
    for (const auto& allowed : allowed_values) {
        if (iequal(v, allowed)) return allowed;
    }
    for (const auto& [alias, target] : synonyms) {
        if (iequal(v, alias)) return target;
    }
    return {};
}

const AttributeDef* CategoryDef::find_attribute(std::string_view attr_name) const {
    for (const auto& attr : attributes) {
        if (iequal(attr.name, attr_name)) return &attr;
    }
    return nullptr;
}

const CategoryDef* AttributeSchema::find_category(std::string_view cat_name) const {
    for (const auto& cat : categories) {
        if (iequal(cat.name, cat_name)) return &cat;
    }
    for (const auto& cat : categories) {
        for (const auto& alias : cat.synonyms) {
            if (iequal(alias, cat_name)) return &cat;
        }
    }
    return nullptr;
}

AttributeSchema parse_schema(const std::string& json_text) {
    nlohmann::json doc = nlohmann::json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("schema: not valid JSON");
    if (!doc.is_object()) throw ConfigError("schema: top level must be an object");

    AttributeSchema schema;
    const auto& version = require_field(doc, "version", "schema");
    if (!version.is_number_integer()) throw ConfigError("schema.version: expected an integer");
    schema.version = version.get<int>();

    const auto& cats = require_field(doc, "categories", "schema");
    if (!cats.is_array()) throw ConfigError("schema.categories: expected an array");

    std::set<std::string> seen_labels; // lowercased names and synonyms, all categories
    for (std::size_t ci = 0; ci < cats.size(); ++ci) {
        const std::string cpath = "schema.categories[" + std::to_string(ci) + "]";
        const auto& cj = cats[ci];
        if (!cj.is_object()) throw ConfigError(cpath + ": expected an object");

        CategoryDef cat;
        cat.name = require_string(cj, "name", cpath);
        if (!seen_labels.insert(lower(cat.name)).second) {
            throw ConfigError(cpath + ".name: duplicate category '" + cat.name + "'");
        }
        if (auto it = cj.find("synonyms"); it != cj.end()) {
            if (!it->is_array()) throw ConfigError(cpath + ".synonyms: expected an array");
            for (const auto& alias : *it) {
                if (!alias.is_string()) {
                    throw ConfigError(cpath + ".synonyms: expected strings");
                }
                const std::string a = alias.get<std::string>();
                if (!seen_labels.insert(lower(a)).second) {
                    throw ConfigError(cpath + ".synonyms: label '" + a +
                                      "' collides with another category");
                }
                cat.synonyms.push_back(a);
            }
        }

        const auto& attrs = require_field(cj, "attributes", cpath);
        if (!attrs.is_array() || attrs.empty()) {
            throw ConfigError(cpath + ".attributes: expected a non-empty array");
        }
        std::set<std::string> seen_attrs;
        for (std::size_t ai = 0; ai < attrs.size(); ++ai) {
            const std::string apath = cpath + ".attributes[" + std::to_string(ai) + "]";
            const auto& aj = attrs[ai];
            if (!aj.is_object()) throw ConfigError(apath + ": expected an object");

            AttributeDef attr;
            attr.name = require_string(aj, "name", apath);
            if (!seen_attrs.insert(lower(attr.name)).second) {
                throw ConfigError(apath + ".name: duplicate attribute '" + attr.name + "'");
            }
            const std::string kind = require_string(aj, "kind", apath);
            if (kind == "enumerated") {
                attr.kind = AttributeKind::Enumerated;
            } else if (kind == "free-text") {
                attr.kind = AttributeKind::FreeText;
            } else {
                throw ConfigError(apath + ".kind: expected 'enumerated' or 'free-text'");
            }

            if (auto it = aj.find("allowed_values"); it != aj.end()) {
                if (!it->is_array()) {
                    throw ConfigError(apath + ".allowed_values: expected an array");
                }
                std::set<std::string> seen_vals;
                for (const auto& v : *it) {
                    if (!v.is_string() || v.get<std::string>().empty()) {
                        throw ConfigError(apath + ".allowed_values: expected non-empty strings");
                    }
                    const std::string val = v.get<std::string>();
                    if (!seen_vals.insert(lower(val)).second) {
                        throw ConfigError(apath + ".allowed_values: duplicate value '" + val +
                                          "'");
                    }
                    attr.allowed_values.push_back(val);
                }
            }
            if (attr.kind == AttributeKind::Enumerated && attr.allowed_values.size() < 2) {
                throw ConfigError(apath +
                                  ": enumerated attribute needs at least two allowed values");
            }
            if (attr.kind == AttributeKind::FreeText && !attr.allowed_values.empty()) {
                throw ConfigError(apath + ": free-text attribute must not list allowed values");
            }

            if (auto it = aj.find("synonyms"); it != aj.end()) {
                if (!it->is_object()) {
                    throw ConfigError(apath + ".synonyms: expected an object");
                }
                for (const auto& [alias, target] : it->items()) {
                    if (!target.is_string()) {
                        throw ConfigError(apath + ".synonyms['" + alias +
                                          "']: expected a string");
                    }
                    const std::string t = target.get<std::string>();
                    const auto hit = std::find_if(
                        attr.allowed_values.begin(), attr.allowed_values.end(),
                        [&](const std::string& v) { return iequal(v, t); });
                    if (hit == attr.allowed_values.end()) {
                        throw ConfigError(apath + ".synonyms['" + alias + "']: target '" + t +
                                          "' is not an allowed value");
                    }
                    attr.synonyms[alias] = *hit; // store the canonical spelling
                }
            }
            cat.attributes.push_back(std::move(attr));
        }
        schema.categories.push_back(std::move(cat));
    }
    return schema;
}

AttributeSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("schema file not readable: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_schema(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_string(RecordStatus status) {
    switch (status) {
        case RecordStatus::Ok: return "ok";
        case RecordStatus::RepairApplied: return "repair_applied";
        case RecordStatus::Invalid: return "invalid";
    }
    throw Error("unreachable record status");
}

RecordStatus status_from_string(std::string_view s) {
    if (s == "ok") return RecordStatus::Ok;
    if (s == "repair_applied") return RecordStatus::RepairApplied;
    if (s == "invalid") return RecordStatus::Invalid;
    throw Error("unknown record status '" + std::string(s) + "'");
}

nlohmann::json record_to_json(const StructuredObjectRecord& record) {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : record.attributes) {
        attrs.push_back({{"name", a.name}, {"value", a.value}, {"confidence", a.confidence}});
    }
    return nlohmann::json{
        {"object_id", record.object_id},
        {"category", record.category},
        {"bbox",
         {{"x_min", record.bbox.x_min},
          {"y_min", record.bbox.y_min},
          {"x_max", record.bbox.x_max},
          {"y_max", record.bbox.y_max}}},
        {"attributes", attrs},
        {"source_image", record.source_image},
        {"status", to_string(record.status)},
        {"detector_confidence", record.detector_confidence},
    };
}

StructuredObjectRecord record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("record: expected a JSON object");
    StructuredObjectRecord r;
    try {
        r.object_id = j.at("object_id").get<std::string>();
        r.category = j.at("category").get<std::string>();
        const auto& b = j.at("bbox");
        r.bbox.x_min = b.at("x_min").get<double>();
        r.bbox.y_min = b.at("y_min").get<double>();
        r.bbox.x_max = b.at("x_max").get<double>();
        r.bbox.y_max = b.at("y_max").get<double>();
        for (const auto& aj : j.at("attributes")) {
            AttributeValue a;
            a.name = aj.at("name").get<std::string>();
            a.value = aj.at("value").get<std::string>();
            a.confidence = aj.at("confidence").get<double>();
            r.attributes.push_back(std::move(a));
        }
        r.source_image = j.at("source_image").get<std::string>();
        r.status = status_from_string(j.at("status").get<std::string>());
        r.detector_confidence = j.value("detector_confidence", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("record: ") + e.what());
    }
    return r;
}

ValidationReport validate_record(const StructuredObjectRecord& record,
                                 const AttributeSchema& schema) {
    ValidationReport report;
    auto add = [&](std::string path, std::string code, std::string message) {
        report.violations.push_back({std::move(path), std::move(code), std::move(message)});
    };

    const CategoryDef* cat = schema.find_category(record.category);
    if (cat == nullptr) {
        add("category", "unknown-category",
            "category '" + record.category + "' is not in the schema");
    }

    std::set<std::string> seen;
    for (std::size_t i = 0; i < record.attributes.size(); ++i) {
        const auto& a = record.attributes[i];
        const std::string path = "attributes[" + std::to_string(i) + "]";
        if (!seen.insert(lower(a.name)).second) {
            add(path + ".name", "duplicate-attribute",
                "attribute '" + a.name + "' appears more than once");
        }
        if (!(a.confidence >= 0.0 && a.confidence <= 1.0)) {
            add(path + ".confidence", "confidence-range",
                "confidence " + std::to_string(a.confidence) + " outside [0, 1]");
        }
        if (cat == nullptr) continue;
        const AttributeDef* def = cat->find_attribute(a.name);
        if (def == nullptr) {
            add(path + ".name", "unknown-attribute",
                "category '" + cat->name + "' does not declare attribute '" + a.name + "'");
            continue;
        }
        if (def->kind == AttributeKind::Enumerated && def->canonical_value(a.value).empty()) {
            add(path + ".value", "invalid-value",
                "value '" + a.value + "' is not allowed for attribute '" + def->name + "'");
        }
    }

    report.valid = report.violations.empty();
    return report;
}

bool normalize_record(StructuredObjectRecord& record, const AttributeSchema& schema) {
    bool changed = false;
    const CategoryDef* cat = schema.find_category(record.category);
    if (cat == nullptr) return false;
    if (record.category != cat->name) {
        record.category = cat->name;
        changed = true;
    }
    for (auto& a : record.attributes) {
        const AttributeDef* def = cat->find_attribute(a.name);
        if (def == nullptr) continue;
        if (a.name != def->name) {
            a.name = def->name;
            changed = true;
        }
        const std::string canon = def->canonical_value(a.value);
        if (!canon.empty() && canon != a.value) {
            a.value = canon;
            changed = true;
        }
    }
    return changed;
}

namespace {

// [start, end) of the next balanced top-level brace block at or after `from`,
// skipping braces inside string literals
std::optional<std::pair<std::size_t, std::size_t>> next_brace_block(const std::string& s,
                                                                    std::size_t from) {
    int depth = 0;
    bool in_string = false, escaped = false;
    std::size_t start = std::string::npos;
    for (std::size_t i = from; i < s.size(); ++i) {
        const char c = s[i];
        if (depth == 0) {
            if (c == '{') {
                depth = 1;
                start = i;
                in_string = false;
                escaped = false;
            }
            continue;
        }
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return std::make_pair(start, i + 1);
    }
    return std::nullopt;
}

std::string scalar_to_string(const nlohmann::json& v, bool& repaired) {
    if (v.is_string()) return v.get<std::string>();
    repaired = true; // model emitted a non-string scalar
    return v.dump();
}

} // namespace

StructuredObjectRecord extract_and_repair(const std::string& raw, const AttributeSchema& schema,
                                          const std::string& expected_category) {
    nlohmann::json block;
    std::size_t from = 0;
    bool found = false;
    while (auto span = next_brace_block(raw, from)) {
        const auto [start, end] = *span;
        nlohmann::json candidate =
            nlohmann::json::parse(raw.substr(start, end - start), nullptr, false);
        if (!candidate.is_discarded() && candidate.is_object()) {
            block = std::move(candidate);
            found = true;
            break;
        }
        from = start + 1; // try blocks nested inside the failed candidate
    }
    if (!found) throw Error("no parseable brace block in model output");

    bool repaired = false;
    StructuredObjectRecord record;

    std::string raw_category;
    if (auto it = block.find("category"); it != block.end() && it->is_string()) {
        raw_category = it->get<std::string>();
    }
    if (raw_category.empty()) throw Error("extracted block lacks a category field");

    const CategoryDef* cat = schema.find_category(raw_category);
    if (cat == nullptr) {
        cat = schema.find_category(expected_category);
        if (cat == nullptr) {
            throw Error("category '" + raw_category + "' unknown and expected category '" +
                        expected_category + "' not in schema");
        }
        repaired = true;
    } else if (cat->name != raw_category) {
        repaired = true; // spelling canonicalized
    }
    record.category = cat->name;

    // attributes may arrive as a list of {name, value, confidence} objects or
    // as a plain name -> value map
    std::set<std::string> present;
    auto push_attribute = [&](const std::string& name, const nlohmann::json& value,
                              const nlohmann::json* confidence) {
        const AttributeDef* def = cat->find_attribute(name);
        if (def == nullptr) {
            repaired = true; // undeclared attribute dropped
            return;
        }
        if (!present.insert(lower(def->name)).second) {
            repaired = true; // duplicate dropped
            return;
        }
        AttributeValue a;
        a.name = def->name;
        if (a.name != name) repaired = true;

        std::string v = scalar_to_string(value, repaired);
        if (def->kind == AttributeKind::Enumerated) {
            const std::string canon = def->canonical_value(v);
            if (canon.empty()) {
                v = kUnknownValue;
                repaired = true;
            } else {
                if (canon != v) repaired = true;
                v = canon;
            }
        }
        a.value = v;

        if (confidence != nullptr && confidence->is_number()) {
            a.confidence = confidence->get<double>();
            if (a.confidence < 0.0) {
                a.confidence = 0.0;
                repaired = true;
            } else if (a.confidence > 1.0) {
                a.confidence = 1.0;
                repaired = true;
            }
        } else {
            a.confidence = 1.0;
            if (confidence != nullptr) repaired = true; // non-numeric confidence replaced
            else repaired = true;                       // confidence missing entirely
        }
        record.attributes.push_back(std::move(a));
    };

    if (auto it = block.find("attributes"); it != block.end()) {
        if (it->is_array()) {
            for (const auto& aj : *it) {
                if (!aj.is_object()) {
                    repaired = true;
                    continue;
                }
                const auto name_it = aj.find("name");
                if (name_it == aj.end() || !name_it->is_string()) {
                    repaired = true;
                    continue;
                }
                const auto value_it = aj.find("value");
                if (value_it == aj.end()) {
                    repaired = true;
                    continue;
                }
                const auto conf_it = aj.find("confidence");
                push_attribute(name_it->get<std::string>(), *value_it,
                               conf_it == aj.end() ? nullptr : &*conf_it);
            }
        } else if (it->is_object()) {
            repaired = true; // map form deviates from the requested list shape
            for (const auto& [name, value] : it->items()) {
                if (value.is_object()) {
                    const auto value_it = value.find("value");
                    if (value_it == value.end()) continue;
                    const auto conf_it = value.find("confidence");
                    push_attribute(name, *value_it,
                                   conf_it == value.end() ? nullptr : &*conf_it);
                } else {
                    push_attribute(name, value, nullptr);
                }
            }
        } else {
            repaired = true;
        }
    }

    for (const auto& def : cat->attributes) {
        if (present.count(lower(def.name)) == 0) {
            record.attributes.push_back({def.name, kUnknownValue, 0.0});
            repaired = true;
        }
    }

    record.status = repaired ? RecordStatus::RepairApplied : RecordStatus::Ok;
    return record;
}

} // namespace curbsight::schema
