#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curbsight/clients.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/retrieval.hpp"
#include "curbsight/schema.hpp"

namespace curbsight::pipeline {

struct PipelineConfig {
    std::vector<geometry::PerspectiveView> views = geometry::default_views();
    double conf_threshold = 0.30;
    double dedup_iou = 0.50;
    double pad_fraction = 0.10;
    std::size_t k = 3; // text hits per object
    std::size_t m = 3; // visual exemplars per object
    std::size_t context_char_budget = 6000;
    bool category_filter_on_visual = true;
    // what rides along as the second image: the whole panorama (default)
    // or just the source sub-view
    bool attach_panorama = true;
    std::string system_template;     // leading task instruction
    std::string object_template;     // per-object header; {category} is replaced
};

PipelineConfig default_pipeline_config();
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j); // throws ConfigError
void check_pipeline_config(const PipelineConfig& cfg);             // throws ConfigError
std::uint64_t pipeline_config_hash(const PipelineConfig& cfg);

// A detection lifted to panorama space. x_min stays in [0, W); when the box
// crosses the longitude seam, x_max = wrapped_end + W so the interval stays
// ascending (consumers take x mod W).
struct PanoDetection {
    std::string category; // canonical schema name
    double confidence = 0.0;
    geometry::BoundingBox pano_box;
    geometry::BoundingBox view_box;
    std::string view_id;
};

// IoU on panorama x-intervals, seam-aware (best of shifting one box by
// -W / 0 / +W).
double pano_iou(const geometry::BoundingBox& a, const geometry::BoundingBox& b, int pano_w);

// Greedy per-category suppression: confidence desc (stable), keep a box iff
// IoU with every kept same-category box stays below the threshold.
std::vector<PanoDetection> dedup_detections(std::vector<PanoDetection> dets,
                                            double iou_threshold, int pano_w);

struct SceneContext {
    std::string crop_id;
    std::string category; // canonical
    const schema::CategoryDef* category_def = nullptr;
    std::vector<retrieval::RetrievalHit> text_hits;     // score desc
    std::vector<retrieval::RetrievalHit> exemplar_hits; // score desc
};

// Deterministic prompt: instruction + per-object header + schema slice,
// numbered text fragments (with locators), exemplar payloads as precedents,
// then the output-format contract. Over budget, lowest-score text hits are
// dropped first, then exemplars, never the schema slice; a dropped section
// leaves a "context truncated" note. Throws when even the untruncatable
// parts exceed the budget.
std::string assemble_context(const SceneContext& ctx, const PipelineConfig& cfg,
                             bool* truncated = nullptr);

struct SceneStats {
    std::size_t detections = 0;    // post label-normalization, pre-dedup
    std::size_t dedup_dropped = 0;
    std::size_t repairs = 0;
    std::size_t invalids = 0;
    double seconds = 0.0; // wall time; excluded from persisted artifacts
};

struct SceneResult {
    std::string image_id;
    std::vector<schema::StructuredObjectRecord> records;
    SceneStats stats;
    bool ok = true;     // false: the scene itself failed (unreadable, all views down)
    std::string error;
};

struct ClientSet {
    clients::Detector* detector = nullptr;
    clients::TextEmbedder* text_embedder = nullptr;
    clients::ImageEmbedder* image_embedder = nullptr;
    clients::VlmClient* vlm = nullptr;
};

struct StoreSet {
    const retrieval::VectorStore* text = nullptr;   // optional when k = 0
    const retrieval::VectorStore* visual = nullptr; // optional when m = 0
};

SceneResult run_scene(const geometry::EquirectImage& pano, const PipelineConfig& cfg,
                      const schema::AttributeSchema& schema, const StoreSet& stores,
                      const ClientSet& clients);

struct BatchInput {
    std::string image_id;
    std::filesystem::path path;
};

struct BatchResult {
    std::vector<SceneResult> scenes; // input order
    nlohmann::json manifest;
    bool all_ok = true;          // every scene ran to completion
    bool fully_valid = true;     // additionally, no invalid records
};

// Bounded worker pool (jobs <= 0 picks the hardware count); scene results
// and the manifest are independent of the worker count.
BatchResult run_batch(const std::vector<BatchInput>& inputs, const PipelineConfig& cfg,
                      const schema::AttributeSchema& schema, const StoreSet& stores,
                      const ClientSet& clients, int jobs = 0);

// One-shot question answering: k text hits around the question, one VLM
// call, raw text back (no schema enforcement).
std::string answer_query(const geometry::EquirectImage& image, const std::string& question,
                         const PipelineConfig& cfg, const StoreSet& stores,
                         const ClientSet& clients);

nlohmann::json scene_stats_to_json(const SceneStats& stats);

} // namespace curbsight::pipeline
