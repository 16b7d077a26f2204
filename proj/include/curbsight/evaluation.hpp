#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curbsight/geometry.hpp"
#include "curbsight/schema.hpp"

namespace curbsight::evaluation {

struct GtObject {
    long id = 0;
    std::string image_id;
    std::string category;
    geometry::BoundingBox bbox;
    std::map<std::string, std::string> attributes; // name -> value
};

struct GroundTruthSet {
    std::vector<std::string> image_ids;
    std::vector<std::string> categories; // declared order drives report rows
    std::vector<GtObject> objects;
    std::map<std::string, std::string> image_city; // optional per-image tag

    // source-file id maps, kept so numeric COCO results can resolve
    std::map<long, std::string> coco_image_ids;
    std::map<long, std::string> coco_category_ids;
};

struct PredBox {
    std::string image_id;
    std::string category;
    geometry::BoundingBox bbox;
    double confidence = 0.0;
    std::string run; // optional model tag (e.g. the train city); "" = untagged
};

// Intersection over union. Throws on degenerate input boxes.
double iou(const geometry::BoundingBox& a, const geometry::BoundingBox& b);

// Greedy matching for one class on one image at a single IoU threshold.
struct MatchResult {
    std::vector<double> confidences; // descending; order of the tp flags
    std::vector<char> tp;            // 1 = matched a gt, 0 = false positive
    int fn = 0;                      // unmatched gts
};

// preds/gts must already be restricted to one class and image. Ties in
// confidence keep input order; each prediction takes the unmatched gt with
// the highest IoU >= iou_thr, first index on equal IoU.
MatchResult match_detections(const std::vector<PredBox>& preds,
                             const std::vector<GtObject>& gts, double iou_thr);

// Dataset-level AP for one class at one threshold: per-image greedy
// matching, global confidence ranking, 101-point interpolated
// precision-recall integral. Throws when gts is empty.
double average_precision(const std::vector<PredBox>& preds,
                         const std::vector<GtObject>& gts, double iou_thr);

// The 10-rung IoU ladder 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

struct ClassDetectionMetrics {
    std::string category;
    int gt_count = 0;
    bool defined = false; // false when the class has no gt instances
    double ap50 = 0.0;
    double ap75 = 0.0;
    double ap = 0.0; // mean over the ladder
    double ar = 0.0; // mean recall over the ladder, top-100 detections per image
    std::vector<double> ap_per_threshold;
};

struct DetectionSummary {
    std::vector<ClassDetectionMetrics> per_class;
    double map50 = 0.0;
    double map75 = 0.0;
    double map = 0.0;
    double mar = 0.0;
    std::vector<std::string> undefined_categories; // excluded from the means
};

DetectionSummary map_summary(const std::vector<PredBox>& preds, const GroundTruthSet& gt);

struct AttributeAccuracy {
    long correct = 0;
    long total = 0;
    // category -> (correct, total); only categories with gt objects appear
    std::map<std::string, std::pair<long, long>> per_class;

    double overall() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }

    // unweighted mean of per-class accuracies; the "All" row in reports
    double macro_mean() const {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [cls, counts] : per_class) {
            if (counts.second == 0) continue;
            sum += static_cast<double>(counts.first) / counts.second;
            ++n;
        }
        return n == 0 ? 0.0 : sum / static_cast<double>(n);
    }
};

// Predictions pair with gt objects via object_id == decimal gt id (the
// annotate-on-gt-boxes flow). The denominator for object j is the number of
// attributes its category declares; a missing record or attribute counts as
// wrong, and values compare after case/synonym canonicalization. Gt objects
// whose category is absent from the schema are skipped. Throws when no
// attributes remain to grade.
AttributeAccuracy attribute_accuracy(const std::vector<schema::StructuredObjectRecord>& preds,
                                     const GroundTruthSet& gt,
                                     const schema::AttributeSchema& schema);

struct EvalReport {
    struct Section {
        std::string label; // empty for the main section
        DetectionSummary detection;
        std::optional<AttributeAccuracy> attributes;
        // set in city-grouping mode; drive the multi-city summary rows
        std::string train_city;
        std::string test_city;
        std::string setting; // "In-domain" | "Cross-city" | "-"
    };
    Section main;
    std::vector<Section> groups; // one per grouping label, e.g. per city
};

nlohmann::json report_to_json(const EvalReport& report);
std::string render_report_text(const EvalReport& report);
std::string render_report_csv(const EvalReport& report);

// --- file ingestion ---------------------------------------------------------

// COCO-style gt: images (id, file_name, optional "city"), categories
// (id, name), annotations (image_id, category_id, bbox [x,y,w,h], optional
// "attributes" {name: value}). Image keys are file_name stems when present,
// decimal ids otherwise.
GroundTruthSet load_ground_truth(const std::filesystem::path& path);

struct PredictionSet {
    std::vector<PredBox> boxes;
    std::vector<schema::StructuredObjectRecord> records; // records-JSONL input only
    bool has_records = false;
    bool has_runs = false; // any box carried a run tag
};

// Accepts the pipeline's records JSONL (by ".jsonl" suffix or a leading
// '{') or a COCO results array [{image_id, category_id|category, bbox,
// score, optional "run"}]. Numeric ids resolve through the gt set.
PredictionSet load_predictions(const std::filesystem::path& path, const GroundTruthSet& gt);

// Full report: detection summary over everything, attribute accuracy when
// record predictions and a schema are at hand, and — in city mode — one
// section per (run, test city) pair with in-domain rows first. City mode
// requires every image to carry a city tag.
EvalReport build_report(const GroundTruthSet& gt, const PredictionSet& preds,
                        const schema::AttributeSchema* schema, bool group_by_city);

} // namespace curbsight::evaluation
