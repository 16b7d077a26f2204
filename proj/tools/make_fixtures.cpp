// Regenerates the committed fixture corpus under fixtures/. Everything is
// deterministic; the tool re-runs the relevant engine paths afterwards and
// aborts if a fixture would not behave as labelled (e.g. a transcript marked
// repair_applied that parses clean).
//
// Usage: make_fixtures [fixtures_dir]

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "curbsight/clients.hpp"
#include "curbsight/error.hpp"
#include "curbsight/evaluation.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/pipeline.hpp"
#include "curbsight/retrieval.hpp"
#include "curbsight/schema.hpp"

namespace fs = std::filesystem;
using namespace curbsight;
using nlohmann::json;

namespace {

void require(bool cond, const std::string& why) {
    if (!cond) throw std::runtime_error("fixture self-check failed: " + why);
}

void write_file(const fs::path& path, const std::string& body) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << body;
    require(static_cast<bool>(out), "write " + path.string());
}

// --- panoramas -----------------------------------------------------------------

cv::Mat paint_pano(int seed) {
    cv::Mat img(512, 1024, CV_8UC3);
    for (int y = 0; y < img.rows; ++y) {
        for (int x = 0; x < img.cols; ++x) {
            img.at<cv::Vec3b>(y, x) =
                cv::Vec3b(static_cast<unsigned char>((x / 2 + seed * 37) % 256),
                          static_cast<unsigned char>((y / 2 + seed * 71) % 256),
                          static_cast<unsigned char>((x / 3 + y / 3 + seed * 13) % 256));
        }
    }
    // scatter some opaque shapes so crops differ in texture
    for (int i = 0; i < 14; ++i) {
        const int cx = (seed * 131 + i * 211) % 1024;
        const int cy = 60 + (seed * 17 + i * 97) % 400;
        const cv::Scalar color((i * 43 + seed * 91) % 256, (i * 67) % 256, (i * 29 + 128) % 256);
        if (i % 2 == 0) {
            cv::rectangle(img, {cx - 24, cy - 40}, {cx + 24, cy + 40}, color, cv::FILLED);
        } else {
            cv::circle(img, {cx, cy}, 26, color, cv::FILLED);
        }
    }
    return img;
}

// --- detection / VLM fixtures ----------------------------------------------------

json view_det(const char* label, double conf, double x0, double y0, double x1, double y1) {
    return json{{"label", label}, {"confidence", conf}, {"bbox", {x0, y0, x1, y1}}};
}

json detector_fixture() {
    json f;
    // pano_001: four categories across three views; the trash bin sits at the
    // centre of the yaw-180 view, so its panorama box crosses the seam
    f["pano_001/v0"] = {view_det("traffic light", 0.92, 80, 60, 170, 260),
                        view_det("hydrant", 0.55, 300, 280, 370, 400)};
    f["pano_001/v1"] = {view_det("bollard", 0.71, 210, 300, 260, 430)};
    f["pano_001/v2"] = {view_det("garbage bin", 0.80, 200, 220, 320, 340)};
    // pano_002: an overlapping same-category pair (dedup drops the weaker)
    // plus a label the schema does not know (dropped at normalization)
    f["pano_002/v0"] = {view_det("bench", 0.90, 100, 100, 200, 200)};
    f["pano_002/v1"] = {view_det("street lamp", 0.85, 100, 100, 200, 260),
                        view_det("street light", 0.65, 110, 105, 205, 265)};
    f["pano_002/v3"] = {view_det("cctv", 0.75, 240, 80, 300, 150)};
    // pano_003: same category in two views, one low-confidence detection
    // below the 0.30 threshold
    f["pano_003/v0"] = {view_det("traffic cone", 0.60, 150, 330, 200, 400),
                        view_det("ball bollard", 0.28, 400, 350, 440, 390)};
    f["pano_003/v1"] = {view_det("cone", 0.55, 280, 320, 330, 395)};
    f["pano_003/v2"] = {view_det("manhole", 0.33, 180, 420, 300, 490)};
    f["pano_003/v3"] = {view_det("street lamp", 0.45, 60, 40, 130, 240)};
    return f;
}

json attr(const char* name, const char* value, double conf) {
    return json{{"name", name}, {"value", value}, {"confidence", conf}};
}

json vlm_fixture() {
    json f;
    // complete, canonical -> status ok
    f["pano_001#0"] = {{"category", "Traffic Light"},
                       {"attributes",
                        json::array({attr("Type", "vehicle", 0.96),
                                     attr("Working State", "working", 0.93),
                                     attr("Color", "green", 0.88),
                                     attr("Damage Condition", "intact", 0.91),
                                     attr("Device Type", "standard", 0.84)})}};
    // synonym values, a missing confidence and missing attributes -> repair
    f["pano_001#1"] = {{"category", "trash bin"},
                       {"attributes",
                        json::array({attr("Color", "grey", 0.80),
                                     json{{"name", "Fullness"}, {"value", "overflow"}},
                                     attr("Material", "metal", 0.77)})}};
    // pano_001#2 (Bollard) has no entry: the mock falls back to
    // hash-derived, schema-valid answers -> ok
    // wrong category spelling plus an undeclared attribute -> repair
    f["pano_001#3"] = {{"category", "FIRE HYDRANT"},
                       {"attributes",
                        json::array({attr("Color", "red", 0.95),
                                     attr("Working State", "working", 0.90),
                                     attr("Damage Condition", "intact", 0.88),
                                     attr("Mount Height", "1m", 0.50)})}};
    // pano_002: complete street light, camera left to the fallback
    f["pano_002#0"] = {{"category", "Street Light"},
                       {"attributes",
                        json::array({attr("Number of Arms", "single", 0.85),
                                     attr("Working State", "working", 0.82),
                                     attr("Damage Condition", "intact", 0.86),
                                     attr("Solar-Powered", "no", 0.78)})}};
    // pano_003: one repaired cone (out-of-vocabulary value), rest fallback
    f["pano_003#1"] = {{"category", "Traffic Cone"},
                       {"attributes",
                        json::array({attr("Color", "neon", 0.70),
                                     attr("Damage Condition", "intact", 0.75)})}};
    return f;
}

// --- knowledge-base documents ------------------------------------------------------

const char* kDocSignals = R"(# Municipal signal equipment: field inspection notes

## Mounting and visibility

Vehicle-facing signal heads on arterial approaches are mounted between 4.5 m
and 5.5 m above the carriageway and must stay visible from at least 80 m in
clear weather. A head rotated more than 10 degrees off its approach axis is
recorded as a geometry defect and scheduled for realignment within ten
working days. Pedestrian heads sit between 2.1 m and 2.6 m and face the
centre of the crossing they serve.

## Lamp condition

A signal showing no light in any phase is a priority-one fault: report it
immediately and place temporary signage before leaving the site. Countdown
timer modules that skip digits or freeze are logged as not working even when
the main lamps cycle correctly. Faded lens housings that wash out under
direct sun are graded as faded rather than damaged provided the lamp itself
meets the luminance floor.

## Camera co-location

Surveillance cameras sharing a mast with signal equipment are inspected on
the same visit. A camera with a cracked dome, severed feed, or visibly
drooping mount is graded damaged; condensation inside the dome alone grades
as intact with a follow-up flag.
)";

const char* kDocAssets = R"(# Street asset upkeep handbook (extract)

## Hydrants

Fire hydrants are painted red or yellow; silver caps are tolerated only on
heritage stock. Keep a one-metre clear radius: plantings, bins, and parked
cycles inside that circle are obstructions and the hydrant is reported as
not working until cleared. A hydrant weeping at the bonnet seal is graded
leaking even when the barrel holds pressure.

## Bins and litter

Street-side trash bins are emptied on the daily round. A bin is graded
overflowing when refuse rises above the rim plane or when three or more
items sit within half a metre of its base. Detached or missing lids are
logged separately from body damage. Fixed bins rock-tested: more than 5 mm
of play at the anchor counts as damaged mounting.

## Bollards and cones

Rigid bollards lean-tested with a straightedge: a lean beyond 15 degrees is
falling. Ball bollards are checked for spalling; exposed aggregate larger
than a palm grades damaged. Traffic cones are seasonal assets; faded sleeves
that no longer retroreflect at night are pulled from service.

## Lighting

A street light column dark after two consecutive night patrols is not
working. Columns with doors missing or cables exposed are damaged regardless
of lamp state, and the cabinet is made safe on the spot.
)";

// --- exemplars -------------------------------------------------------------------

cv::Mat paint_exemplar(int seed, const cv::Scalar& base) {
    cv::Mat img(96, 96, CV_8UC3, base);
    cv::rectangle(img, {8 + seed % 5, 16}, {88 - seed % 7, 80},
                  cv::Scalar((seed * 53) % 256, (seed * 97) % 256, (seed * 29) % 256), 3);
    cv::circle(img, {48, 48}, 14 + seed % 9,
               cv::Scalar((seed * 41) % 256, 200, (seed * 67) % 256), cv::FILLED);
    return img;
}

json exemplar_annotations() {
    json coco;
    coco["images"] = json::array();
    coco["categories"] = json::array();
    coco["annotations"] = json::array();
    const std::vector<std::string> cats = {"Traffic Light", "Fire Hydrant", "Trash Bin",
                                           "Bollard", "Street Light"};
    for (std::size_t i = 0; i < cats.size(); ++i) {
        coco["categories"].push_back({{"id", static_cast<int>(i) + 1}, {"name", cats[i]}});
    }
    const struct {
        int image;
        int category;
        json attributes;
    } rows[] = {
        {1, 1, {{"Type", "vehicle"}, {"Working State", "working"}, {"Color", "red"}}},
        {1, 1, {{"Type", "pedestrian"}, {"Working State", "working"}, {"Color", "green"}}},
        {2, 2, {{"Color", "red"}, {"Working State", "working"}, {"Damage Condition", "intact"}}},
        {3, 2, {{"Color", "yellow"}, {"Working State", "leaking"}}},
        {4, 3, {{"Color", "gray"}, {"Fullness", "partial"}, {"Lid Condition", "closed"}}},
        {4, 3, {{"Color", "green"}, {"Fullness", "overflowing"}}},
        {5, 4, {{"Material", "metal"}, {"Posture", "upright"}, {"Damage Condition", "intact"}}},
        {6, 5, {{"Number of Arms", "single"}, {"Working State", "working"}}},
    };
    int ann_id = 1;
    for (const auto& row : rows) {
        coco["annotations"].push_back({{"id", ann_id},
                                       {"image_id", row.image},
                                       {"category_id", row.category},
                                       {"bbox", {10.0 + ann_id, 12.0, 60.0, 70.0}},
                                       {"attributes", row.attributes}});
        ++ann_id;
    }
    for (int i = 1; i <= 6; ++i) {
        coco["images"].push_back(
            {{"id", i}, {"file_name", "ex_" + std::to_string(i) + ".png"}});
    }
    return coco;
}

// --- repair transcript corpus -------------------------------------------------------

json repair_corpus() {
    json corpus = json::array();
    auto add = [&](const std::string& id, const std::string& category, const std::string& raw,
                   const std::string& expect) {
        corpus.push_back(
            {{"id", id}, {"category", category}, {"raw", raw}, {"expect", expect}});
    };
    const std::string tl_complete =
        R"({"category": "Traffic Light", "attributes": [)"
        R"({"name": "Type", "value": "vehicle", "confidence": 0.9}, )"
        R"({"name": "Working State", "value": "working", "confidence": 0.85}, )"
        R"({"name": "Color", "value": "red", "confidence": 0.8}, )"
        R"({"name": "Damage Condition", "value": "intact", "confidence": 0.9}, )"
        R"({"name": "Device Type", "value": "standard", "confidence": 0.75}]})";
    const std::string fh_complete =
        R"({"category": "Fire Hydrant", "attributes": [)"
        R"({"name": "Color", "value": "yellow", "confidence": 0.92}, )"
        R"({"name": "Working State", "value": "working", "confidence": 0.88}, )"
        R"({"name": "Damage Condition", "value": "intact", "confidence": 0.9}]})";
    const std::string bd_complete =
        R"({"category": "Bollard", "attributes": [)"
        R"({"name": "Material", "value": "metal", "confidence": 0.8}, )"
        R"({"name": "Color", "value": "gray", "confidence": 0.7}, )"
        R"({"name": "Posture", "value": "upright", "confidence": 0.75}, )"
        R"({"name": "Damage Condition", "value": "intact", "confidence": 0.85}, )"
        R"({"name": "Reflective Property", "value": "reflective", "confidence": 0.7}]})";
    const std::string mc_complete =
        R"({"category": "Manhole Cover", "attributes": [)"
        R"({"name": "Shape", "value": "round", "confidence": 0.95}, )"
        R"({"name": "Safety Condition", "value": "secure", "confidence": 0.9}, )"
        R"({"name": "Surface Pattern", "value": "diamond plate", "confidence": 0.85}]})";

    // 8 clean JSON bodies
    add("clean_01", "Traffic Light", tl_complete, "ok");
    add("clean_02", "Fire Hydrant", fh_complete, "ok");
    add("clean_03", "Bollard", bd_complete, "ok");
    add("clean_04", "Manhole Cover", mc_complete, "ok");
    add("clean_05", "Traffic Light", "  \n" + tl_complete + "\n", "ok");
    add("clean_06", "Fire Hydrant", fh_complete + "\n\n", "ok");
    add("clean_07", "Bollard", "\t" + bd_complete, "ok");
    add("clean_08", "Manhole Cover", mc_complete + " ", "ok");

    // 8 fenced JSON bodies
    add("fence_01", "Traffic Light", "```json\n" + tl_complete + "\n```", "ok");
    add("fence_02", "Fire Hydrant", "```json\n" + fh_complete + "\n```\n", "ok");
    add("fence_03", "Bollard", "```\n" + bd_complete + "\n```", "ok");
    add("fence_04", "Manhole Cover",
        "Here is the annotation.\n```json\n" + mc_complete + "\n```", "ok");
    add("fence_05", "Traffic Light",
        "```json\n" + tl_complete + "\n```\nLet me know if anything is unclear.", "ok");
    add("fence_06", "Fire Hydrant", "Result:\n\n```json\n" + fh_complete + "\n```\n\nDone.",
        "ok");
    add("fence_07", "Bollard", "````\n" + bd_complete + "\n````", "ok");
    add("fence_08", "Manhole Cover", "```JSON\n" + mc_complete + "\n```", "ok");

    // 7 prose-wrapped bodies that need repair
    add("repair_01", "Trash Bin",
        R"(The bin looks mostly fine. {"category": "trash bin", "attributes": [)"
        R"({"name": "Color", "value": "grey", "confidence": 0.8}]} as requested.)",
        "repair_applied");
    add("repair_02", "Traffic Light",
        R"(I'd say {"category": "Traffic Light", "attributes": [)"
        R"({"name": "Color", "value": "crimson", "confidence": 0.7}, )"
        R"({"name": "Working State", "value": "working"}]} overall.)",
        "repair_applied");
    add("repair_03", "Fire Hydrant",
        R"(Answer: {"category": "Fire Hydrant", "attributes": {"Color": "red", )"
        R"("Working State": "leaking", "Damage Condition": "intact"}})",
        "repair_applied");
    add("repair_04", "Bollard",
        R"({"category": "Bollard", "attributes": [)"
        R"({"name": "Type", "value": "fixed", "confidence": 1.4}, )"
        R"({"name": "Color", "value": "gray", "confidence": 0.7}, )"
        R"({"name": "Working State", "value": "working", "confidence": 0.75}, )"
        R"({"name": "Damage Condition", "value": "intact", "confidence": 0.85}]})",
        "repair_applied");
    add("repair_05", "Street Light",
        R"(Based on the crop: {"category": "street lamp", "attributes": [)"
        R"({"name": "Working State", "value": "on", "confidence": "high"}]}.)",
        "repair_applied");
    add("repair_06", "Surveillance Camera",
        R"({"category": "Surveillance Camera", "attributes": [)"
        R"({"name": "Shape", "value": "gun_shape", "confidence": 0.8}, )"
        R"({"name": "Shape", "value": "ball_shape", "confidence": 0.6}, )"
        R"({"name": "Mounting", "value": "pole", "confidence": 0.9}]})",
        "repair_applied");
    add("repair_07", "Traffic Cone",
        R"(Sure. The cone: {"category": "cone", "attributes": [)"
        R"({"name": "color", "value": "ORANGE", "confidence": 0.66}]} Hope that helps!)",
        "repair_applied");

    // 7 brace-free bodies that must hard-error
    add("error_01", "Trash Bin",
        "The object appears to be a municipal waste container in fair condition.", "error");
    add("error_02", "Traffic Light",
        "category: Traffic Light\nworking state: working\ncolor: red", "error");
    add("error_03", "Fire Hydrant",
        "- Color: yellow\n- Working State: working\n- Damage Condition: intact", "error");
    add("error_04", "Bollard", "I cannot tell from this crop, sorry.", "error");
    add("error_05", "Street Light", "```json\n```", "error");
    add("error_06", "Manhole Cover",
        "It is a round cover, likely cast iron, probably intact. No JSON needed, right?",
        "error");
    add("error_07", "Traffic Cone", "", "error");
    return corpus;
}

void verify_repair_corpus(const json& corpus, const schema::AttributeSchema& schema) {
    for (const auto& t : corpus) {
        const std::string id = t.at("id");
        const std::string expect = t.at("expect");
        try {
            const auto rec = schema::extract_and_repair(t.at("raw"), schema, t.at("category"));
            const char* got =
                rec.status == schema::RecordStatus::Ok ? "ok" : "repair_applied";
            require(expect == got, id + ": expected " + expect + ", got " + got);
            schema::StructuredObjectRecord full = rec;
            full.object_id = id;
            full.source_image = "fixture";
            full.bbox = {0, 0, 10, 10};
            require(schema::validate_record(full, schema).valid, id + ": record not valid");
        } catch (const Error&) {
            require(expect == "error", id + ": unexpected hard error");
        }
    }
}

// --- evaluation fixtures --------------------------------------------------------------

std::string canonical_value(const schema::AttributeDef& def, long salt) {
    if (def.kind == schema::AttributeKind::Enumerated) {
        return def.allowed_values[static_cast<std::size_t>(salt) % def.allowed_values.size()];
    }
    return "site note " + std::to_string(salt % 7);
}

struct EvalFixture {
    json gt;
    std::string records_jsonl;
    json runs;
};

EvalFixture eval_fixture(const schema::AttributeSchema& schema) {
    EvalFixture out;
    out.gt["images"] = json::array();
    out.gt["categories"] = json::array();
    out.gt["annotations"] = json::array();
    for (std::size_t i = 0; i < schema.categories.size(); ++i) {
        out.gt["categories"].push_back(
            {{"id", static_cast<int>(i) + 1}, {"name", schema.categories[i].name}});
    }
    const std::vector<std::pair<std::string, std::string>> image_rows = {
        {"wh_001", "Wuhan"},    {"wh_002", "Wuhan"},    {"wh_003", "Wuhan"},
        {"sh_001", "Shanghai"}, {"sh_002", "Shanghai"}, {"sh_003", "Shanghai"}};
    for (std::size_t i = 0; i < image_rows.size(); ++i) {
        out.gt["images"].push_back({{"id", static_cast<int>(i) + 1},
                                    {"file_name", image_rows[i].first + ".png"},
                                    {"city", image_rows[i].second}});
    }

    json runs = json::array();
    long ann_id = 0;
    // two objects of every category in every city
    for (std::size_t ci = 0; ci < schema.categories.size(); ++ci) {
        const auto& cat = schema.categories[ci];
        for (int city = 0; city < 2; ++city) {
            for (int rep = 0; rep < 2; ++rep) {
                ++ann_id;
                const int image_idx = city * 3 + (static_cast<int>(ci) + rep) % 3;
                const double w = 60.0 + (ann_id % 3) * 15.0;
                const double h = 80.0 + (ann_id % 2) * 20.0;
                const double x = 40.0 + 90.0 * static_cast<double>(ci);
                const double y = 50.0 + 160.0 * rep;
                json attrs = json::object();
                for (std::size_t ai = 0; ai < cat.attributes.size(); ++ai) {
                    attrs[cat.attributes[ai].name] =
                        canonical_value(cat.attributes[ai], ann_id + static_cast<long>(ai));
                }
                out.gt["annotations"].push_back({{"id", ann_id},
                                                 {"image_id", image_idx + 1},
                                                 {"category_id", static_cast<int>(ci) + 1},
                                                 {"bbox", {x, y, w, h}},
                                                 {"attributes", attrs}});

                // untagged records prediction: per-class box offset, a third
                // of the first-attribute values flipped wrong
                schema::StructuredObjectRecord rec;
                rec.object_id = std::to_string(ann_id);
                rec.category = cat.name;
                rec.source_image = image_rows[image_idx].first;
                const double dx = w * 0.06 * static_cast<double>(ci % 4);
                rec.bbox = {x + dx, y, x + dx + w, y + h};
                rec.detector_confidence = 0.95 - 0.005 * static_cast<double>(ann_id);
                rec.status = schema::RecordStatus::Ok;
                for (std::size_t ai = 0; ai < cat.attributes.size(); ++ai) {
                    schema::AttributeValue v;
                    v.name = cat.attributes[ai].name;
                    v.value = attrs[v.name].get<std::string>();
                    v.confidence = 0.9;
                    if (ai == 0 && ann_id % 3 == 0) {
                        v.value = canonical_value(cat.attributes[ai],
                                                  ann_id + static_cast<long>(ai) + 1);
                        if (v.value == attrs[v.name].get<std::string>()) {
                            v.value = schema::kUnknownValue;
                        }
                    }
                    rec.attributes.push_back(std::move(v));
                }
                out.records_jsonl += schema::record_to_json(rec).dump() + "\n";

                // tagged runs: each city's model sees its own city sharply
                // and the other city blunter and patchier
                for (int run = 0; run < 2; ++run) {
                    const std::string run_city = run == 0 ? "Wuhan" : "Shanghai";
                    const bool in_domain = run == city;
                    if (!in_domain && ann_id % 5 == 0) continue; // cross-city misses
                    const double off = in_domain ? 0.03 * w : 0.22 * w;
                    const double score =
                        (in_domain ? 0.90 : 0.60) - 0.002 * static_cast<double>(ann_id);
                    runs.push_back({{"image_id", image_idx + 1},
                                    {"category_id", static_cast<int>(ci) + 1},
                                    {"bbox", {x + off, y, w, h}},
                                    {"score", score},
                                    {"run", run_city}});
                }
            }
        }
    }
    out.runs = std::move(runs);
    return out;
}

void verify_eval_fixture(const EvalFixture& fx, const fs::path& dir,
                         const schema::AttributeSchema& schema) {
    const auto gt = evaluation::load_ground_truth(dir / "gt.json");
    require(gt.categories.size() == schema.categories.size(), "eval gt category count");

    const auto recs = evaluation::load_predictions(dir / "pred.records.jsonl", gt);
    const auto report = evaluation::build_report(gt, recs, &schema, false);
    double mean = 0.0;
    int defined = 0;
    for (const auto& cls : report.main.detection.per_class) {
        if (!cls.defined) continue;
        mean += cls.ap;
        ++defined;
    }
    require(defined == static_cast<int>(schema.categories.size()), "every class defined");
    mean /= defined;
    require(std::abs(mean - report.main.detection.map) < 1e-12, "All row is the class mean");
    require(report.main.attributes.has_value(), "attribute section present");
    const double acc = report.main.attributes->overall();
    require(acc > 0.5 && acc < 1.0, "attribute accuracy should be partial, got " +
                                        std::to_string(acc));

    const auto runs = evaluation::load_predictions(dir / "pred_runs.json", gt);
    const auto city = evaluation::build_report(gt, runs, nullptr, true);
    require(city.groups.size() == 4, "four city rows");
    require(city.groups[0].setting == "In-domain" && city.groups[1].setting == "Cross-city",
            "row order");
    require(city.groups[0].detection.map > city.groups[1].detection.map,
            "in-domain beats cross-city");
}

// --- mock pipeline self-check ------------------------------------------------------

pipeline::PipelineConfig fixture_pipeline_config() {
    pipeline::PipelineConfig cfg = pipeline::default_pipeline_config();
    cfg.views = geometry::default_views(512);
    cfg.k = 2;
    cfg.m = 2;
    return cfg;
}

void verify_annotate_fixture(const fs::path& dir, const schema::AttributeSchema& schema) {
    clients::MockDetector detector(dir / "mock_detections.json");
    clients::MockTextEmbedder text_embedder(64);
    clients::MockImageEmbedder image_embedder(64);
    auto vlm = clients::MockVlm::from_file(schema, dir / "mock_vlm.json",
                                           clients::MockVlmMode::Fixture,
                                           "Here is the annotation you asked for.\n```json\n"
                                           "{json}\n```\n");
    pipeline::ClientSet clients{&detector, &text_embedder, &image_embedder, &vlm};
    pipeline::StoreSet stores{nullptr, nullptr};
    const auto cfg = fixture_pipeline_config();

    const std::map<std::string, std::pair<std::size_t, std::size_t>> expectations = {
        // image -> {records, repairs}
        {"pano_001", {4, 2}},
        {"pano_002", {2, 0}},
        {"pano_003", {4, 1}},
    };
    for (const auto& [image_id, want] : expectations) {
        geometry::EquirectImage pano;
        pano.image_id = image_id;
        pano.pixels = cv::imread((dir / "panos" / (image_id + ".png")).string(),
                                 cv::IMREAD_COLOR);
        require(!pano.pixels.empty(), "fixture pano unreadable: " + image_id);
        const auto res = pipeline::run_scene(pano, cfg, schema, stores, clients);
        require(res.ok, image_id + ": scene failed: " + res.error);
        require(res.records.size() == want.first,
                image_id + ": expected " + std::to_string(want.first) + " records, got " +
                    std::to_string(res.records.size()));
        require(res.stats.repairs == want.second,
                image_id + ": expected " + std::to_string(want.second) + " repairs, got " +
                    std::to_string(res.stats.repairs));
        require(res.stats.invalids == 0, image_id + ": unexpected invalid records");
        for (const auto& rec : res.records) {
            require(schema::validate_record(rec, schema).valid,
                    image_id + "/" + rec.object_id + ": record does not validate");
        }
    }
}

json fixture_config() {
    json cfg;
    cfg["schema"] = "../data/default_schema.json";
    cfg["stores"] = {{"text", "stores/kb.store"}, {"visual", "stores/exemplars.store"},
                     {"dim", 64}};
    cfg["pipeline"] = pipeline::pipeline_config_to_json(fixture_pipeline_config());
    cfg["services"] = {{"mode", "mock"},
                       {"mock",
                        {{"detector_fixture", "mock_detections.json"},
                         {"vlm_fixture", "mock_vlm.json"},
                         {"vlm_mode", "fixture"},
                         {"vlm_template",
                          "Here is the annotation you asked for.\n```json\n{json}\n```\n"}}}};
    cfg["jobs"] = 0;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? argv[1] : "fixtures";
    try {
        fs::create_directories(dir);
        const fs::path schema_src = dir / ".." / "data" / "default_schema.json";
        const auto schema = schema::load_schema(schema_src);

        fs::create_directories(dir / "panos");
        for (int i = 1; i <= 3; ++i) {
            const auto path = dir / "panos" / ("pano_00" + std::to_string(i) + ".png");
            require(cv::imwrite(path.string(), paint_pano(i)), "imwrite " + path.string());
        }
        write_file(dir / "mock_detections.json", detector_fixture().dump(2) + "\n");
        write_file(dir / "mock_vlm.json", vlm_fixture().dump(2) + "\n");
        write_file(dir / "config.mock.json", fixture_config().dump(2) + "\n");
        write_file(dir / "kb" / "signal_inspection.md", kDocSignals);
        write_file(dir / "kb" / "asset_upkeep.md", kDocAssets);

        fs::create_directories(dir / "exemplars" / "images");
        const cv::Scalar bases[] = {{40, 40, 180}, {60, 160, 60},  {180, 60, 60},
                                    {90, 90, 90},  {30, 140, 200}, {160, 120, 40}};
        for (int i = 1; i <= 6; ++i) {
            const auto path = dir / "exemplars" / "images" / ("ex_" + std::to_string(i) + ".png");
            require(cv::imwrite(path.string(), paint_exemplar(i, bases[i - 1])),
                    "imwrite " + path.string());
        }
        write_file(dir / "exemplars" / "annotations.json",
                   exemplar_annotations().dump(2) + "\n");

        const json corpus = repair_corpus();
        require(corpus.size() == 30, "repair corpus must hold 30 transcripts");
        verify_repair_corpus(corpus, schema);
        write_file(dir / "repair" / "transcripts.json", corpus.dump(2) + "\n");

        const EvalFixture fx = eval_fixture(schema);
        write_file(dir / "eval" / "gt.json", fx.gt.dump(2) + "\n");
        write_file(dir / "eval" / "pred.records.jsonl", fx.records_jsonl);
        write_file(dir / "eval" / "pred_runs.json", fx.runs.dump(2) + "\n");
        verify_eval_fixture(fx, dir / "eval", schema);

        verify_annotate_fixture(dir, schema);

        std::cerr << "fixtures written to " << dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
}
