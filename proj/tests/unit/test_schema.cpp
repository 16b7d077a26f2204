#include <doctest.h>

#include <string>

#include "curbsight/error.hpp"
#include "curbsight/schema.hpp"

using namespace curbsight;
using namespace curbsight::schema;

#ifndef CURBSIGHT_SOURCE_DIR
#define CURBSIGHT_SOURCE_DIR "."
#endif

namespace {

const char* kConformingTrafficLight = R"({
  "category": "Traffic Light",
  "attributes": [
    {"name": "Type", "value": "vehicle", "confidence": 0.93},
    {"name": "Working State", "value": "working", "confidence": 0.98},
    {"name": "Color", "value": "red", "confidence": 0.9},
    {"name": "Damage Condition", "value": "intact", "confidence": 0.88},
    {"name": "Device Type", "value": "standard", "confidence": 0.75}
  ]
})";

AttributeSchema default_schema() {
    return load_schema(std::string(CURBSIGHT_SOURCE_DIR) + "/data/default_schema.json");
}

} // namespace

TEST_CASE("default schema ships the ten stock categories in file order") {
    const AttributeSchema s = default_schema();
    REQUIRE(s.categories.size() == 10);
    const char* expected[] = {"Traffic Light",  "Street Light",        "Traffic Sign",
                              "Bollard",        "Ball Bollard",        "Surveillance Camera",
                              "Manhole Cover",  "Trash Bin",           "Fire Hydrant",
                              "Traffic Cone"};
    for (int i = 0; i < 10; ++i) CHECK(s.categories[i].name == expected[i]);

    for (const auto& cat : s.categories) {
        CHECK(!cat.attributes.empty());
        for (const auto& attr : cat.attributes) {
            if (attr.kind == AttributeKind::Enumerated) {
                CHECK(attr.allowed_values.size() >= 2);
            } else {
                CHECK(attr.allowed_values.empty());
            }
        }
    }
}

TEST_CASE("category lookup is case-insensitive and honours synonyms") {
    const AttributeSchema s = default_schema();
    CHECK(s.find_category("traffic light") != nullptr);
    CHECK(s.find_category("TRAFFIC LIGHT") == s.find_category("Traffic Light"));
    CHECK(s.find_category("manhole") == s.find_category("Manhole Cover"));
    CHECK(s.find_category("drone") == nullptr);

    const CategoryDef* tl = s.find_category("Traffic Light");
    REQUIRE(tl != nullptr);
    CHECK(tl->find_attribute("color") != nullptr);
    CHECK(tl->find_attribute("Altitude") == nullptr);
}

TEST_CASE("schema parse failures carry a path") {
    CHECK_THROWS_AS((void)parse_schema(""), ConfigError);
    CHECK_THROWS_AS((void)parse_schema("not json"), ConfigError);
    CHECK_THROWS_AS((void)parse_schema("[]"), ConfigError);
    CHECK_THROWS_AS((void)parse_schema(R"({"categories": []})"), ConfigError); // no version

    const char* dup_category = R"({
      "version": 1,
      "categories": [
        {"name": "bollard", "attributes": [
          {"name": "Color", "kind": "enumerated", "allowed_values": ["red", "blue"]}]},
        {"name": "Bollard", "attributes": [
          {"name": "Color", "kind": "enumerated", "allowed_values": ["red", "blue"]}]}
      ]
    })";
    CHECK_THROWS_WITH_AS((void)parse_schema(dup_category),
                         doctest::Contains("duplicate category"), ConfigError);

    const char* bad_synonym = R"({
      "version": 1,
      "categories": [
        {"name": "Bollard", "attributes": [
          {"name": "Color", "kind": "enumerated", "allowed_values": ["red", "blue"],
           "synonyms": {"crimson": "magenta"}}]}
      ]
    })";
    CHECK_THROWS_WITH_AS((void)parse_schema(bad_synonym),
                         doctest::Contains("not an allowed value"), ConfigError);

    const char* single_value = R"({
      "version": 1,
      "categories": [
        {"name": "Bollard", "attributes": [
          {"name": "Color", "kind": "enumerated", "allowed_values": ["red"]}]}
      ]
    })";
    CHECK_THROWS_WITH_AS((void)parse_schema(single_value),
                         doctest::Contains("at least two"), ConfigError);

    const char* freetext_with_values = R"({
      "version": 1,
      "categories": [
        {"name": "Bollard", "attributes": [
          {"name": "Notes", "kind": "free-text", "allowed_values": ["a", "b"]}]}
      ]
    })";
    CHECK_THROWS_AS((void)parse_schema(freetext_with_values), ConfigError);
}

TEST_CASE("load_schema reports unreadable paths") {
    CHECK_THROWS_WITH_AS((void)load_schema("/no/such/schema.json"),
                         doctest::Contains("/no/such/schema.json"), ConfigError);
}

TEST_CASE("validation accepts a conforming record") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.object_id = "obj_1";
    r.category = "Traffic Light";
    r.bbox = {10, 10, 50, 90};
    r.attributes = {{"Color", "red", 0.9}};
    r.source_image = "pano_001";

    const ValidationReport rep = validate_record(r, s);
    CHECK(rep.valid);
    CHECK(rep.violations.empty());
}

TEST_CASE("validation enumerates every violation") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.category = "drone";
    r.attributes = {{"Color", "red", 1.5}, {"Color", "red", 0.5}};
    const ValidationReport rep = validate_record(r, s);
    CHECK_FALSE(rep.valid);
    REQUIRE(rep.violations.size() == 3);
    CHECK(rep.violations[0].code == "unknown-category");
    bool saw_range = false, saw_dup = false;
    for (const auto& v : rep.violations) {
        if (v.code == "confidence-range") saw_range = true;
        if (v.code == "duplicate-attribute") saw_dup = true;
    }
    CHECK(saw_range);
    CHECK(saw_dup);
}

TEST_CASE("validation flags unknown attributes and out-of-vocabulary values") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.category = "Traffic Light";
    r.attributes = {{"Altitude", "high", 0.5}, {"Color", "purple", 0.5}};
    const ValidationReport rep = validate_record(r, s);
    CHECK_FALSE(rep.valid);
    REQUIRE(rep.violations.size() == 2);
    CHECK(rep.violations[0].code == "unknown-attribute");
    CHECK(rep.violations[1].code == "invalid-value");
    CHECK(rep.violations[1].path == "attributes[1].value");
}

TEST_CASE("the unknown sentinel always validates for enumerated attributes") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.category = "Traffic Light";
    r.attributes = {{"Color", "unknown", 0.0}};
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("synonyms canonicalize through normalize_record") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.category = "traffic light";
    r.attributes = {{"color", "crimson", 0.8}};

    CHECK(validate_record(r, s).valid); // already valid modulo spelling
    CHECK(normalize_record(r, s));
    CHECK(r.category == "Traffic Light");
    CHECK(r.attributes[0].name == "Color");
    CHECK(r.attributes[0].value == "red");
    CHECK(validate_record(r, s).valid);

    // a second pass changes nothing
    CHECK_FALSE(normalize_record(r, s));
}

TEST_CASE("record JSON round trip is the identity") {
    StructuredObjectRecord r;
    r.object_id = "pano_001#3";
    r.category = "Trash Bin";
    r.bbox = {12.25, 30.5, 412.75, 801.0};
    r.attributes = {{"Fullness", "overflowing", 0.77}, {"Color", "green", 0.91}};
    r.source_image = "pano_001";
    r.status = RecordStatus::RepairApplied;
    r.detector_confidence = 0.64;

    const nlohmann::json j = record_to_json(r);
    const StructuredObjectRecord back = record_from_json(j);
    CHECK(record_to_json(back) == j);
    CHECK(back.object_id == r.object_id);
    CHECK(back.category == r.category);
    CHECK(back.bbox.x_min == r.bbox.x_min);
    CHECK(back.bbox.y_max == r.bbox.y_max);
    CHECK(back.attributes.size() == 2);
    CHECK(back.attributes[0].value == "overflowing");
    CHECK(back.status == RecordStatus::RepairApplied);
    CHECK(back.detector_confidence == 0.64);

    CHECK_THROWS_AS((void)record_from_json(nlohmann::json::array()), Error);
    CHECK_THROWS_AS((void)record_from_json(nlohmann::json{{"object_id", "x"}}), Error);
}

TEST_CASE("validation reports are deterministic") {
    const AttributeSchema s = default_schema();
    StructuredObjectRecord r;
    r.category = "Traffic Light";
    r.attributes = {{"Color", "purple", 0.5}};
    const ValidationReport a = validate_record(r, s);
    const ValidationReport b = validate_record(r, s);
    REQUIRE(a.violations.size() == b.violations.size());
    for (std::size_t i = 0; i < a.violations.size(); ++i) {
        CHECK(a.violations[i].path == b.violations[i].path);
        CHECK(a.violations[i].code == b.violations[i].code);
        CHECK(a.violations[i].message == b.violations[i].message);
    }
}

TEST_CASE("extraction: exact conforming JSON passes through untouched") {
    const AttributeSchema s = default_schema();
    const StructuredObjectRecord r = extract_and_repair(kConformingTrafficLight, s, "Traffic Light");
    CHECK(r.status == RecordStatus::Ok);
    CHECK(r.category == "Traffic Light");
    REQUIRE(r.attributes.size() == 5);
    CHECK(r.attributes[0].name == "Type");
    CHECK(r.attributes[0].value == "vehicle");
    CHECK(r.attributes[0].confidence == 0.93);
    CHECK(r.attributes[2].value == "red");
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("extraction: fenced code block with prose around it") {
    const AttributeSchema s = default_schema();
    const std::string raw = std::string("Sure, here is the annotation you asked for:\n\n```json\n") +
                            kConformingTrafficLight + "\n```\nLet me know if anything is off.";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Traffic Light");
    CHECK(r.status == RecordStatus::Ok); // nothing needed normalization
    REQUIRE(r.attributes.size() == 5);
    CHECK(r.attributes[2].value == "red");
}

TEST_CASE("extraction: normalization marks the record repaired") {
    const AttributeSchema s = default_schema();
    const char* raw = R"({
      "category": "traffic light",
      "attributes": [
        {"name": "color", "value": "CRIMSON", "confidence": 0.8}
      ]
    })";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Traffic Light");
    CHECK(r.status == RecordStatus::RepairApplied);
    CHECK(r.category == "Traffic Light");
    REQUIRE(r.attributes.size() == 5); // missing ones filled
    CHECK(r.attributes[0].name == "Color");
    CHECK(r.attributes[0].value == "red");
    // filled attributes carry the unknown sentinel at zero confidence
    CHECK(r.attributes[1].value == kUnknownValue);
    CHECK(r.attributes[1].confidence == 0.0);
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("extraction: out-of-vocabulary values blank to unknown, stray attributes drop") {
    const AttributeSchema s = default_schema();
    const char* raw = R"({
      "category": "Traffic Light",
      "attributes": [
        {"name": "Color", "value": "purple", "confidence": 0.9},
        {"name": "Altitude", "value": "3m", "confidence": 0.9}
      ]
    })";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Traffic Light");
    CHECK(r.status == RecordStatus::RepairApplied);
    REQUIRE(r.attributes.size() == 5);
    CHECK(r.attributes[0].name == "Color");
    CHECK(r.attributes[0].value == kUnknownValue);
    for (const auto& a : r.attributes) CHECK(a.name != "Altitude");
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("extraction: unknown category falls back to the expected one") {
    const AttributeSchema s = default_schema();
    const char* raw = R"({"category": "utility pole", "attributes": []})";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Street Light");
    CHECK(r.status == RecordStatus::RepairApplied);
    CHECK(r.category == "Street Light");
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("extraction: hard failures") {
    const AttributeSchema s = default_schema();
    CHECK_THROWS_AS((void)extract_and_repair("I cannot determine this.", s, "Bollard"), Error);
    CHECK_THROWS_AS((void)extract_and_repair("{}", s, ""), Error); // no category anywhere
    CHECK_THROWS_AS((void)extract_and_repair(R"({"attributes": []})", s, "Bollard"), Error);
    CHECK_THROWS_AS(
        (void)extract_and_repair(R"({"category": "dog", "attributes": []})", s, "spaceship"),
        Error);
}

TEST_CASE("extraction: first parseable block wins over earlier junk") {
    const AttributeSchema s = default_schema();
    const std::string raw =
        std::string("{not json at all} some prose ") +
        R"({"category": "Bollard", "attributes": [{"name": "Color", "value": "black", "confidence": 0.7}]})";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Bollard");
    CHECK(r.category == "Bollard");
    REQUIRE(!r.attributes.empty());
    CHECK(r.attributes[0].value == "black");
}

TEST_CASE("extraction: attribute maps are coerced") {
    const AttributeSchema s = default_schema();
    const char* raw = R"({
      "category": "Fire Hydrant",
      "attributes": {"Color": "red", "Working State": "working", "Damage Condition": "intact"}
    })";
    const StructuredObjectRecord r = extract_and_repair(raw, s, "Fire Hydrant");
    CHECK(r.status == RecordStatus::RepairApplied);
    REQUIRE(r.attributes.size() == 3);
    CHECK(validate_record(r, s).valid);
}

TEST_CASE("extraction output always validates") {
    const AttributeSchema s = default_schema();
    const char* samples[] = {
        R"({"category": "Bollard", "attributes": [{"name": "Color", "value": 42, "confidence": 3.0}]})",
        R"(prefix {"category": "TRASH BIN", "attributes": [{"name": "Fullness", "value": "overflow"}]})",
        R"({"category": "cone", "attributes": [{"name": "Posture", "value": "knocked over", "confidence": -1}]})",
        R"({"category": "Manhole Cover", "attributes": [{"name": "Surface Pattern", "value": "checker grid", "confidence": 0.5}]})",
    };
    for (const char* raw : samples) {
        const StructuredObjectRecord r = extract_and_repair(raw, s, "Bollard");
        CAPTURE(raw);
        CHECK(validate_record(r, s).valid);
    }
}
