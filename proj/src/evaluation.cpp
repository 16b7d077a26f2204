#include "curbsight/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "curbsight/error.hpp"

namespace curbsight::evaluation {

namespace {

constexpr std::size_t kMaxDetectionsPerImage = 100; // recall cap, COCO maxDets

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::size_t> confidence_order(const std::vector<PredBox>& preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return preds[a].confidence > preds[b].confidence;
    });
    return order;
}

struct RankedFlags {
    std::vector<double> confidences;
    std::vector<char> tp;
};

// per-image greedy matching across the whole dataset for one class;
// cap = per-image detection budget (SIZE_MAX = unlimited)
RankedFlags rank_dataset(const std::vector<PredBox>& preds, const std::vector<GtObject>& gts,
                         double iou_thr, std::size_t cap) {
    std::unordered_map<std::string, std::vector<PredBox>> preds_by_image;
    std::unordered_map<std::string, std::vector<GtObject>> gts_by_image;
    std::vector<std::string> image_order;
    auto touch = [&](const std::string& id) {
        if (!preds_by_image.count(id) && !gts_by_image.count(id)) image_order.push_back(id);
    };
    for (const auto& g : gts) {
        touch(g.image_id);
        gts_by_image[g.image_id].push_back(g);
    }
    for (const auto& p : preds) {
        touch(p.image_id);
        preds_by_image[p.image_id].push_back(p);
    }

    RankedFlags out;
    for (const auto& img : image_order) {
        auto& img_preds = preds_by_image[img];
        if (img_preds.size() > cap) {
            const auto order = confidence_order(img_preds);
            std::vector<char> keep(img_preds.size(), 0);
            for (std::size_t i = 0; i < cap; ++i) keep[order[i]] = 1;
            std::vector<PredBox> trimmed;
            trimmed.reserve(cap);
            for (std::size_t i = 0; i < img_preds.size(); ++i) {
                if (keep[i]) trimmed.push_back(img_preds[i]);
            }
            img_preds = std::move(trimmed);
        }
        const MatchResult m = match_detections(img_preds, gts_by_image[img], iou_thr);
        out.confidences.insert(out.confidences.end(), m.confidences.begin(),
                               m.confidences.end());
        out.tp.insert(out.tp.end(), m.tp.begin(), m.tp.end());
    }

    // global ranking, stable across images
    std::vector<std::size_t> order(out.tp.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.confidences[a] > out.confidences[b];
    });
    RankedFlags ranked;
    ranked.confidences.reserve(order.size());
    ranked.tp.reserve(order.size());
    for (const std::size_t i : order) {
        ranked.confidences.push_back(out.confidences[i]);
        ranked.tp.push_back(out.tp[i]);
    }
    return ranked;
}

double ap_from_flags(const RankedFlags& ranked, long gt_count) {
    const std::size_t n = ranked.tp.size();
    std::vector<long> cum_tp(n);
    long running = 0;
    for (std::size_t i = 0; i < n; ++i) {
        running += ranked.tp[i];
        cum_tp[i] = running;
    }

    // precision at each prefix, then the non-increasing envelope from the
    // high-recall end backwards
    std::vector<double> precision(n);
    for (std::size_t i = 0; i < n; ++i) {
        precision[i] = static_cast<double>(cum_tp[i]) / static_cast<double>(i + 1);
    }
    for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }

    double sum = 0.0;
    std::size_t k = 0;
    for (int ri = 0; ri <= 100; ++ri) {
        // first prefix whose recall reaches ri/100; integer form of
        // cum_tp[k]/gt_count >= ri/100
        while (k < n && 100 * cum_tp[k] < static_cast<long>(ri) * gt_count) ++k;
        if (k == n) break; // no prefix reaches this recall; contributes 0
        sum += precision[k];
    }
    return sum / 101.0;
}

double recall_from_flags(const RankedFlags& ranked, long gt_count) {
    long tp = 0;
    for (const char f : ranked.tp) tp += f;
    return static_cast<double>(tp) / static_cast<double>(gt_count);
}

std::string pct(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << v * 100.0;
    return os.str();
}

} // namespace

double iou(const geometry::BoundingBox& a, const geometry::BoundingBox& b) {
    if (!a.valid() || !b.valid()) throw Error("iou: degenerate box");
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

MatchResult match_detections(const std::vector<PredBox>& preds,
                             const std::vector<GtObject>& gts, double iou_thr) {
    MatchResult result;
    const auto order = confidence_order(preds);
    std::vector<char> gt_taken(gts.size(), 0);
    for (const std::size_t pi : order) {
        double best = 0.0;
        std::size_t best_gt = gts.size();
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double v = iou(preds[pi].bbox, gts[gi].bbox);
            if (v >= iou_thr && v > best) {
                best = v;
                best_gt = gi;
            }
        }
        result.confidences.push_back(preds[pi].confidence);
        if (best_gt < gts.size()) {
            gt_taken[best_gt] = 1;
            result.tp.push_back(1);
        } else {
            result.tp.push_back(0);
        }
    }
    result.fn = static_cast<int>(std::count(gt_taken.begin(), gt_taken.end(), 0));
    return result;
}

double average_precision(const std::vector<PredBox>& preds,
                         const std::vector<GtObject>& gts, double iou_thr) {
    if (gts.empty()) throw Error("average_precision: no ground-truth objects for this class");
    const RankedFlags ranked = rank_dataset(preds, gts, iou_thr, SIZE_MAX);
    return ap_from_flags(ranked, static_cast<long>(gts.size()));
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

DetectionSummary map_summary(const std::vector<PredBox>& preds, const GroundTruthSet& gt) {
    DetectionSummary summary;
    const std::vector<double> ladder = coco_thresholds();

    std::unordered_map<std::string, std::vector<PredBox>> preds_by_class;
    std::unordered_map<std::string, std::vector<GtObject>> gts_by_class;
    for (const auto& p : preds) preds_by_class[lower(p.category)].push_back(p);
    for (const auto& g : gt.objects) gts_by_class[lower(g.category)].push_back(g);

    int defined = 0;
    double sum50 = 0.0, sum75 = 0.0, sum_ap = 0.0, sum_ar = 0.0;
    for (const auto& category : gt.categories) {
        ClassDetectionMetrics cls;
        cls.category = category;
        const auto& cls_gts = gts_by_class[lower(category)];
        const auto& cls_preds = preds_by_class[lower(category)];
        cls.gt_count = static_cast<int>(cls_gts.size());
        cls.defined = !cls_gts.empty();
        if (cls.defined) {
            double recall_sum = 0.0;
            for (const double thr : ladder) {
                const double ap = ap_from_flags(rank_dataset(cls_preds, cls_gts, thr, SIZE_MAX),
                                                cls.gt_count);
                cls.ap_per_threshold.push_back(ap);
                recall_sum += recall_from_flags(
                    rank_dataset(cls_preds, cls_gts, thr, kMaxDetectionsPerImage),
                    cls.gt_count);
            }
            cls.ap50 = cls.ap_per_threshold[0];
            cls.ap75 = cls.ap_per_threshold[5];
            cls.ap = std::accumulate(cls.ap_per_threshold.begin(), cls.ap_per_threshold.end(),
                                     0.0) /
                     static_cast<double>(ladder.size());
            cls.ar = recall_sum / static_cast<double>(ladder.size());
            ++defined;
            sum50 += cls.ap50;
            sum75 += cls.ap75;
            sum_ap += cls.ap;
            sum_ar += cls.ar;
        } else {
            summary.undefined_categories.push_back(category);
        }
        summary.per_class.push_back(std::move(cls));
    }

    if (defined > 0) {
        summary.map50 = sum50 / defined;
        summary.map75 = sum75 / defined;
        summary.map = sum_ap / defined;
        summary.mar = sum_ar / defined;
    }
    return summary;
}

AttributeAccuracy attribute_accuracy(const std::vector<schema::StructuredObjectRecord>& preds,
                                     const GroundTruthSet& gt,
                                     const schema::AttributeSchema& schema) {
    std::unordered_map<std::string, const schema::StructuredObjectRecord*> by_id;
    for (const auto& r : preds) by_id[r.object_id] = &r;

    AttributeAccuracy acc;
    for (const auto& obj : gt.objects) {
        const schema::CategoryDef* cat = schema.find_category(obj.category);
        if (cat == nullptr) continue; // not gradable against this schema

        const schema::StructuredObjectRecord* rec = nullptr;
        if (auto it = by_id.find(std::to_string(obj.id)); it != by_id.end()) rec = it->second;

        auto& cls = acc.per_class[cat->name];
        for (const auto& def : cat->attributes) {
            ++acc.total;
            ++cls.second;

            std::string gt_value = schema::kUnknownValue;
            for (const auto& [name, value] : obj.attributes) {
                if (lower(name) == lower(def.name)) {
                    gt_value = value;
                    break;
                }
            }

            if (rec == nullptr) continue;
            const schema::AttributeValue* pred_attr = nullptr;
            for (const auto& a : rec->attributes) {
                if (lower(a.name) == lower(def.name)) {
                    pred_attr = &a;
                    break;
                }
            }
            if (pred_attr == nullptr) continue; // missing prediction is wrong

            std::string canon_gt = def.canonical_value(gt_value);
            std::string canon_pred = def.canonical_value(pred_attr->value);
            if (canon_gt.empty()) canon_gt = gt_value;        // out-of-vocabulary gt text
            if (canon_pred.empty()) canon_pred = pred_attr->value;
            if (lower(canon_gt) == lower(canon_pred)) {
                ++acc.correct;
                ++cls.first;
            }
        }
    }

    if (acc.total == 0) throw Error("attribute_accuracy: no gradable attributes");
    return acc;
}

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(std::string(what) + " file not found: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) {
        throw Error(std::string(what) + " file is not valid JSON: " + path.string());
    }
    return j;
}

geometry::BoundingBox corners_from_coco(const nlohmann::json& b, const std::string& where) {
    if (!b.is_array() || b.size() != 4) {
        throw Error(where + ": bbox must be [x, y, width, height]");
    }
    geometry::BoundingBox box;
    box.x_min = b[0].get<double>();
    box.y_min = b[1].get<double>();
    box.x_max = box.x_min + b[2].get<double>();
    box.y_max = box.y_min + b[3].get<double>();
    if (!box.valid()) throw Error(where + ": bbox has non-positive width or height");
    return box;
}

} // namespace

GroundTruthSet load_ground_truth(const std::filesystem::path& path) {
    const nlohmann::json j = read_json_file(path, "ground truth");
    if (!j.is_object() || !j.contains("images") || !j.contains("annotations") ||
        !j.contains("categories")) {
        throw Error("ground truth needs COCO-style images/annotations/categories: " +
                    path.string());
    }
    GroundTruthSet gt;
    for (const auto& img : j.at("images")) {
        const long id = img.at("id").get<long>();
        std::string key = std::to_string(id);
        if (img.contains("file_name")) {
            key = std::filesystem::path(img.at("file_name").get<std::string>()).stem().string();
        }
        if (!gt.coco_image_ids.emplace(id, key).second) {
            throw Error("duplicate image id " + std::to_string(id));
        }
        gt.image_ids.push_back(key);
        if (img.contains("city")) gt.image_city[key] = img.at("city").get<std::string>();
    }
    for (const auto& cat : j.at("categories")) {
        const long id = cat.at("id").get<long>();
        const std::string name = cat.at("name").get<std::string>();
        if (!gt.coco_category_ids.emplace(id, name).second) {
            throw Error("duplicate category id " + std::to_string(id));
        }
        gt.categories.push_back(name);
    }
    for (const auto& ann : j.at("annotations")) {
        GtObject o;
        o.id = ann.at("id").get<long>();
        const std::string where = "annotation " + std::to_string(o.id);
        const auto img = gt.coco_image_ids.find(ann.at("image_id").get<long>());
        if (img == gt.coco_image_ids.end()) throw Error(where + ": unknown image_id");
        o.image_id = img->second;
        const auto cat = gt.coco_category_ids.find(ann.at("category_id").get<long>());
        if (cat == gt.coco_category_ids.end()) throw Error(where + ": unknown category_id");
        o.category = cat->second;
        o.bbox = corners_from_coco(ann.at("bbox"), where);
        if (ann.contains("attributes")) {
            for (const auto& [name, value] : ann.at("attributes").items()) {
                if (!value.is_string()) {
                    throw Error(where + ": attribute '" + name + "' must be a string");
                }
                o.attributes[name] = value.get<std::string>();
            }
        }
        gt.objects.push_back(std::move(o));
    }
    return gt;
}

PredictionSet load_predictions(const std::filesystem::path& path, const GroundTruthSet& gt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("predictions file not found: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw Error("predictions file is empty: " + path.string());

    const std::unordered_set<std::string> known_images(gt.image_ids.begin(),
                                                       gt.image_ids.end());
    PredictionSet out;

    if (text[first] == '[') { // COCO results array
        const nlohmann::json arr = nlohmann::json::parse(text, nullptr, false);
        if (arr.is_discarded() || !arr.is_array()) {
            throw Error("predictions file is not a valid JSON array: " + path.string());
        }
        std::size_t n = 0;
        for (const auto& entry : arr) {
            const std::string where = "prediction " + std::to_string(n++);
            PredBox p;
            const auto& img = entry.at("image_id");
            if (img.is_number()) {
                const auto it = gt.coco_image_ids.find(img.get<long>());
                if (it == gt.coco_image_ids.end()) throw Error(where + ": unknown image_id");
                p.image_id = it->second;
            } else {
                p.image_id = std::filesystem::path(img.get<std::string>()).stem().string();
            }
            if (!known_images.count(p.image_id)) {
                throw Error(where + ": image '" + p.image_id + "' is not in the ground truth");
            }
            if (entry.contains("category_id")) {
                const auto it = gt.coco_category_ids.find(entry.at("category_id").get<long>());
                if (it == gt.coco_category_ids.end()) {
                    throw Error(where + ": unknown category_id");
                }
                p.category = it->second;
            } else {
                p.category = entry.at("category").get<std::string>();
            }
            p.bbox = corners_from_coco(entry.at("bbox"), where);
            p.confidence = entry.at("score").get<double>();
            if (entry.contains("run")) {
                p.run = entry.at("run").get<std::string>();
                out.has_runs = true;
            }
            out.boxes.push_back(std::move(p));
        }
        return out;
    }

    // records JSONL: one structured object record per line
    out.has_records = true;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error("predictions line " + std::to_string(lineno) + " is not valid JSON");
        }
        schema::StructuredObjectRecord rec = schema::record_from_json(j);
        PredBox p;
        p.image_id = rec.source_image;
        p.category = rec.category;
        p.bbox = rec.bbox;
        p.confidence = rec.detector_confidence;
        if (!known_images.count(p.image_id)) {
            throw Error("predictions line " + std::to_string(lineno) + ": image '" +
                        p.image_id + "' is not in the ground truth");
        }
        out.boxes.push_back(std::move(p));
        out.records.push_back(std::move(rec));
    }
    return out;
}

namespace {

// attribute_accuracy throws when nothing is gradable; only call it when a
// gt object's category exists in the schema
bool gradable(const std::vector<GtObject>& objects, const schema::AttributeSchema& schema) {
    return std::any_of(objects.begin(), objects.end(), [&](const GtObject& o) {
        return schema.find_category(o.category) != nullptr;
    });
}

} // namespace

EvalReport build_report(const GroundTruthSet& gt, const PredictionSet& preds,
                        const schema::AttributeSchema* schema, bool group_by_city) {
    EvalReport report;
    report.main.detection = map_summary(preds.boxes, gt);
    if (preds.has_records && schema && gradable(gt.objects, *schema)) {
        report.main.attributes = attribute_accuracy(preds.records, gt, *schema);
    }
    if (!group_by_city) return report;

    std::vector<std::string> cities;
    for (const auto& id : gt.image_ids) {
        const auto it = gt.image_city.find(id);
        if (it == gt.image_city.end()) {
            throw Error("image '" + id + "' carries no city tag; city grouping needs one on "
                        "every image");
        }
        if (std::find(cities.begin(), cities.end(), it->second) == cities.end()) {
            cities.push_back(it->second);
        }
    }
    std::vector<std::string> runs;
    for (const auto& b : preds.boxes) {
        if (std::find(runs.begin(), runs.end(), b.run) == runs.end()) runs.push_back(b.run);
    }
    if (runs.empty()) runs.push_back("");

    for (const auto& run : runs) {
        std::vector<std::string> order; // in-domain city leads its block
        for (const auto& c : cities) {
            if (c == run) order.push_back(c);
        }
        for (const auto& c : cities) {
            if (c != run) order.push_back(c);
        }
        for (const auto& city : order) {
            GroundTruthSet sub;
            sub.categories = gt.categories;
            std::unordered_set<std::string> members;
            for (const auto& id : gt.image_ids) {
                if (gt.image_city.at(id) == city) {
                    sub.image_ids.push_back(id);
                    sub.image_city[id] = city;
                    members.insert(id);
                }
            }
            for (const auto& o : gt.objects) {
                if (members.count(o.image_id)) sub.objects.push_back(o);
            }
            std::vector<PredBox> boxes;
            for (const auto& b : preds.boxes) {
                if (b.run == run && members.count(b.image_id)) boxes.push_back(b);
            }

            EvalReport::Section sec;
            sec.test_city = city;
            sec.train_city = run.empty() ? "-" : run;
            sec.setting = run.empty() ? "-" : (run == city ? "In-domain" : "Cross-city");
            sec.label = run.empty() ? city : run + " -> " + city;
            sec.detection = map_summary(boxes, sub);
            if (preds.has_records && schema && !preds.has_runs &&
                gradable(sub.objects, *schema)) {
                std::vector<schema::StructuredObjectRecord> recs;
                for (const auto& r : preds.records) {
                    if (members.count(r.source_image)) recs.push_back(r);
                }
                sec.attributes = attribute_accuracy(recs, sub, *schema);
            }
            report.groups.push_back(std::move(sec));
        }
    }
    return report;
}

namespace {

nlohmann::json detection_to_json(const DetectionSummary& d) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& cls : d.per_class) {
        per_class.push_back({{"category", cls.category},
                             {"gt_count", cls.gt_count},
                             {"defined", cls.defined},
                             {"ap50", cls.ap50},
                             {"ap75", cls.ap75},
                             {"ap", cls.ap},
                             {"ar", cls.ar},
                             {"ap_per_threshold", cls.ap_per_threshold}});
    }
    return nlohmann::json{{"per_class", per_class},
                          {"all",
                           {{"map50", d.map50},
                            {"map75", d.map75},
                            {"map", d.map},
                            {"mar", d.mar}}},
                          {"undefined_categories", d.undefined_categories}};
}

nlohmann::json attributes_to_json(const AttributeAccuracy& a) {
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, counts] : a.per_class) {
        const double v =
            counts.second == 0 ? 0.0 : static_cast<double>(counts.first) / counts.second;
        per_class[cls] = {{"correct", counts.first}, {"total", counts.second}, {"accuracy", v}};
    }
    return nlohmann::json{{"correct", a.correct},
                          {"total", a.total},
                          {"overall", a.overall()},
                          {"all", a.macro_mean()},
                          {"per_class", per_class}};
}

void render_section_text(std::ostream& os, const EvalReport::Section& s) {
    const int name_w = 22;
    os << "Detection (per class)\n";
    os << std::left << std::setw(name_w) << "Category"
       << " |    mAP | mAP@50 | mAP@75 |    mAR\n";
    os << std::string(name_w, '-') << "-+--------+--------+--------+-------\n";
    auto row = [&](const std::string& name, double ap, double ap50, double ap75, double ar) {
        os << std::left << std::setw(name_w) << name << " | " << std::right << std::setw(6)
           << pct(ap) << " | " << std::setw(6) << pct(ap50) << " | " << std::setw(6) << pct(ap75)
           << " | " << std::setw(6) << pct(ar) << "\n";
    };
    for (const auto& cls : s.detection.per_class) {
        if (!cls.defined) continue;
        row(cls.category, cls.ap, cls.ap50, cls.ap75, cls.ar);
    }
    row("All", s.detection.map, s.detection.map50, s.detection.map75, s.detection.mar);
    if (!s.detection.undefined_categories.empty()) {
        os << "(no gt instances: ";
        for (std::size_t i = 0; i < s.detection.undefined_categories.size(); ++i) {
            if (i) os << ", ";
            os << s.detection.undefined_categories[i];
        }
        os << ")\n";
    }

    if (s.attributes) {
        os << "\nAttribute recognition (per class)\n";
        os << std::left << std::setw(name_w) << "Category" << " | Accuracy\n";
        os << std::string(name_w, '-') << "-+---------\n";
        for (const auto& [cls, counts] : s.attributes->per_class) {
            const double v =
                counts.second == 0 ? 0.0 : static_cast<double>(counts.first) / counts.second;
            os << std::left << std::setw(name_w) << cls << " | " << std::right << std::setw(7)
               << pct(v) << "\n";
        }
        os << std::left << std::setw(name_w) << "All" << " | " << std::right << std::setw(7)
           << pct(s.attributes->macro_mean()) << "\n";
    }
}

} // namespace

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["detection"] = detection_to_json(report.main.detection);
    if (report.main.attributes) j["attributes"] = attributes_to_json(*report.main.attributes);
    if (!report.groups.empty()) {
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& g : report.groups) {
            nlohmann::json entry;
            entry["label"] = g.label;
            if (!g.test_city.empty()) {
                entry["train_city"] = g.train_city;
                entry["test_city"] = g.test_city;
                entry["setting"] = g.setting;
            }
            entry["detection"] = detection_to_json(g.detection);
            if (g.attributes) entry["attributes"] = attributes_to_json(*g.attributes);
            groups.push_back(std::move(entry));
        }
        j["groups"] = std::move(groups);
    }
    return j;
}

std::string render_report_text(const EvalReport& report) {
    std::ostringstream os;
    render_section_text(os, report.main);
    if (!report.groups.empty()) {
        const bool city_mode =
            std::all_of(report.groups.begin(), report.groups.end(),
                        [](const EvalReport::Section& g) { return !g.test_city.empty(); });
        if (city_mode) {
            os << "\nMulti-city evaluation\n";
            os << "=====================\n";
            os << std::left << std::setw(12) << "Train City" << std::setw(12) << "Test City"
               << std::setw(12) << "Setting" << std::right << std::setw(6) << "mAP"
               << std::setw(9) << "mAP@50" << "\n";
            for (const auto& g : report.groups) {
                os << std::left << std::setw(12) << g.train_city << std::setw(12)
                   << g.test_city << std::setw(12) << g.setting << std::right << std::setw(6)
                   << pct(g.detection.map) << std::setw(9) << pct(g.detection.map50) << "\n";
            }
        }
        os << "\ncross-group results\n";
        os << "===================\n";
        for (const auto& g : report.groups) {
            os << "\n[" << g.label << "]\n";
            render_section_text(os, g);
        }
    }
    return os.str();
}

std::string render_report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "category,gt_count,map,map50,map75,mar,attr_accuracy\n";
    os.setf(std::ios::fixed);
    os.precision(6);
    auto section = [&](const EvalReport::Section& s, const std::string& prefix) {
        for (const auto& cls : s.detection.per_class) {
            if (!cls.defined) continue;
            os << prefix << cls.category << "," << cls.gt_count << "," << cls.ap << ","
               << cls.ap50 << "," << cls.ap75 << "," << cls.ar << ",";
            if (s.attributes && s.attributes->per_class.count(cls.category)) {
                const auto& counts = s.attributes->per_class.at(cls.category);
                os << (counts.second == 0
                           ? 0.0
                           : static_cast<double>(counts.first) / counts.second);
            }
            os << "\n";
        }
        os << prefix << "All,," << s.detection.map << "," << s.detection.map50 << ","
           << s.detection.map75 << "," << s.detection.mar << ",";
        if (s.attributes) os << s.attributes->macro_mean();
        os << "\n";
    };
    section(report.main, "");
    for (const auto& g : report.groups) section(g, g.label + "/");
    return os.str();
}

} // namespace curbsight::evaluation
