// Acceptance gate: nine release criteria, one PASS/FAIL line each.
//
// Criteria 1-6 exercise the library against the frozen reference
// implementations in tests/support (written independently of the engine).
// Criteria 7-9 run the shipped CLI and fixture corpus end to end. The
// tenth check — live endpoints — is manual by design and only noted here.
//
// Exit status: 0 when all nine pass, 1 otherwise.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curbsight/error.hpp"
#include "curbsight/evaluation.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/numerics.hpp"
#include "curbsight/retrieval.hpp"
#include "curbsight/schema.hpp"

#include "../support/eval_oracle.hpp"
#include "../support/retrieval_oracle.hpp"

#ifndef CURBSIGHT_SOURCE_DIR
#error "CURBSIGHT_SOURCE_DIR must point at the repository root"
#endif
#ifndef CURBSIGHT_CLI_PATH
#error "CURBSIGHT_CLI_PATH must point at the curbsight binary"
#endif

namespace fs = std::filesystem;
using namespace curbsight;

namespace {

const fs::path kSourceDir = CURBSIGHT_SOURCE_DIR;
const fs::path kFixtures = kSourceDir / "fixtures";
const std::string kCli = CURBSIGHT_CLI_PATH;

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
    if (!cond) throw CheckFailure(what);
}

void require_close(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
        std::ostringstream os;
        os.precision(17);
        os << what << ": got " << got << ", want " << want << " (tol " << tol << ")";
        throw CheckFailure(os.str());
    }
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

// Runs the CLI with stdout+stderr captured; returns the process exit code.
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1) throw CheckFailure("failed to spawn: " + cmd);
    if (!WIFEXITED(rc)) throw CheckFailure("cli did not exit normally: " + cmd);
    return WEXITSTATUS(rc);
}

std::string log_tail(const fs::path& log) {
    std::ifstream in(log, std::ios::binary);
    if (!in) return "(no log captured)";
    std::ostringstream os;
    os << in.rdbuf();
    std::string text = os.str();
    if (text.size() > 400) text = "..." + text.substr(text.size() - 400);
    return text;
}

void run_cli_expect(int want, const std::string& args, const fs::path& log,
                    const std::string& what) {
    const int rc = run_cli(args, log);
    if (rc != want) {
        throw CheckFailure(what + ": exit " + std::to_string(rc) + ", want " +
                           std::to_string(want) + "; args: " + args + "; log: " + log_tail(log));
    }
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> tokens_of(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

// ---------------------------------------------------------------------------
// criterion 1: AP engine vs. the frozen brute-force PR integrator

struct Scene {
    evaluation::GroundTruthSet gt;
    std::vector<evaluation::PredBox> preds;
};

Scene make_scene(std::mt19937& rng, bool stress) {
    std::uniform_real_distribution<double> coord(0.0, 900.0);
    std::uniform_real_distribution<double> side(10.0, 120.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Scene s;
    const int n_classes = 1 + static_cast<int>(rng() % 10);
    const int n_images = 1 + static_cast<int>(rng() % 8);
    int n_gts = stress ? 150 + static_cast<int>(rng() % 50)
                       : n_classes + static_cast<int>(rng() % 120);
    n_gts = std::max(n_gts, n_classes);
    const int budget = 500 - n_gts; // total boxes per scene stay <= 500
    const int n_preds = stress ? budget : static_cast<int>(rng() % (budget + 1));

    for (int i = 0; i < n_images; ++i) s.gt.image_ids.push_back("img_" + std::to_string(i));
    for (int c = 0; c < n_classes; ++c) s.gt.categories.push_back("class_" + std::to_string(c));

    for (int i = 0; i < n_gts; ++i) {
        evaluation::GtObject g;
        g.id = i + 1;
        g.image_id = s.gt.image_ids[rng() % n_images];
        // the first n_classes gts claim one class each so every class is defined
        g.category = i < n_classes ? s.gt.categories[static_cast<std::size_t>(i)]
                                   : s.gt.categories[rng() % n_classes];
        g.bbox.x_min = coord(rng);
        g.bbox.y_min = coord(rng);
        g.bbox.x_max = g.bbox.x_min + side(rng);
        g.bbox.y_max = g.bbox.y_min + side(rng);
        s.gt.objects.push_back(g);
    }

    for (int i = 0; i < n_preds; ++i) {
        evaluation::PredBox p;
        if (unit(rng) < 0.55) {
            const auto& g = s.gt.objects[rng() % s.gt.objects.size()];
            p.image_id = g.image_id;
            p.category = unit(rng) < 0.9 ? g.category : s.gt.categories[rng() % n_classes];
            const double jx = (unit(rng) - 0.5) * 30.0;
            const double jy = (unit(rng) - 0.5) * 30.0;
            const double grow = 0.8 + 0.4 * unit(rng);
            p.bbox.x_min = g.bbox.x_min + jx;
            p.bbox.y_min = g.bbox.y_min + jy;
            p.bbox.x_max = p.bbox.x_min + g.bbox.width() * grow;
            p.bbox.y_max = p.bbox.y_min + g.bbox.height() * grow;
        } else {
            p.image_id = s.gt.image_ids[rng() % n_images];
            p.category = s.gt.categories[rng() % n_classes];
            p.bbox.x_min = coord(rng);
            p.bbox.y_min = coord(rng);
            p.bbox.x_max = p.bbox.x_min + side(rng);
            p.bbox.y_max = p.bbox.y_min + side(rng);
        }
        p.confidence = unit(rng);
        s.preds.push_back(p);
    }
    return s;
}

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(4242);
    const auto thresholds = evaluation::coco_thresholds();

    for (int scene_i = 0; scene_i < 200; ++scene_i) {
        const Scene s = make_scene(rng, scene_i % 20 == 19);
        const auto summary = evaluation::map_summary(s.preds, s.gt);
        require(summary.per_class.size() == s.gt.categories.size(),
                "scene " + std::to_string(scene_i) + ": class row count");

        double oracle_map = 0.0, oracle_map50 = 0.0, oracle_map75 = 0.0;
        for (const auto& cls : summary.per_class) {
            require(cls.defined, "scene " + std::to_string(scene_i) + ": class '" +
                                     cls.category + "' lost its gt instances");
            std::vector<evaluation::PredBox> cp;
            std::vector<evaluation::GtObject> cg;
            for (const auto& p : s.preds) {
                if (p.category == cls.category) cp.push_back(p);
            }
            for (const auto& g : s.gt.objects) {
                if (g.category == cls.category) cg.push_back(g);
            }
            double class_sum = 0.0;
            for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
                const double ref = eval_oracle::average_precision(cp, cg, thresholds[ti]);
                require_close(cls.ap_per_threshold[ti], ref, 1e-9,
                              "scene " + std::to_string(scene_i) + " class " + cls.category +
                                  " AP@" + std::to_string(thresholds[ti]));
                class_sum += ref;
                if (thresholds[ti] == 0.5) oracle_map50 += ref;
                if (thresholds[ti] == 0.75) oracle_map75 += ref;
            }
            oracle_map += class_sum / static_cast<double>(thresholds.size());
        }
        const auto n = static_cast<double>(summary.per_class.size());
        require_close(summary.map, oracle_map / n, 1e-12,
                      "scene " + std::to_string(scene_i) + " mAP@50:95 aggregate");
        require_close(summary.map50, oracle_map50 / n, 1e-12,
                      "scene " + std::to_string(scene_i) + " mAP@50 aggregate");
        require_close(summary.map75, oracle_map75 / n, 1e-12,
                      "scene " + std::to_string(scene_i) + " mAP@75 aggregate");
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(secs < 60.0, "runtime " + std::to_string(secs) + "s exceeds the 60s budget");
}

// ---------------------------------------------------------------------------
// criterion 2: IoU unit values

void criterion_2() {
    const geometry::BoundingBox a{0, 0, 10, 10};
    require(evaluation::iou(a, a) == 1.0, "identity IoU must be exactly 1.0");
    require(evaluation::iou(a, {20, 20, 30, 30}) == 0.0, "disjoint IoU must be exactly 0.0");
    require_close(evaluation::iou(a, {5, 5, 15, 15}), 1.0 / 7.0, 1e-12, "quarter-overlap IoU");
}

// ---------------------------------------------------------------------------
// criterion 3: attribute accuracy fixture + invariances

schema::StructuredObjectRecord simple_record(long id, const std::string& cat,
                                             std::vector<schema::AttributeValue> attrs) {
    schema::StructuredObjectRecord r;
    r.object_id = std::to_string(id);
    r.category = cat;
    r.bbox = {0, 0, 10, 10};
    r.attributes = std::move(attrs);
    r.source_image = "img";
    return r;
}

void criterion_3() {
    // hand-counted case: categories with K=3 and K=2 attributes, 4 of 5 right
    const schema::AttributeSchema toy = schema::parse_schema(R"({
        "version": 1,
        "categories": [
            {"name": "A", "attributes": [
                {"name": "p", "kind": "enumerated", "allowed_values": ["x", "y"]},
                {"name": "q", "kind": "enumerated", "allowed_values": ["x", "y"]},
                {"name": "r", "kind": "enumerated", "allowed_values": ["x", "y"]}]},
            {"name": "B", "attributes": [
                {"name": "p", "kind": "enumerated", "allowed_values": ["x", "y"]},
                {"name": "q", "kind": "enumerated", "allowed_values": ["x", "y"]}]}
        ]})");

    evaluation::GroundTruthSet gt;
    gt.image_ids = {"img"};
    gt.categories = {"A", "B"};
    evaluation::GtObject g1;
    g1.id = 1;
    g1.image_id = "img";
    g1.category = "A";
    g1.bbox = {0, 0, 10, 10};
    g1.attributes = {{"p", "x"}, {"q", "x"}, {"r", "x"}};
    evaluation::GtObject g2 = g1;
    g2.id = 2;
    g2.category = "B";
    g2.attributes = {{"p", "x"}, {"q", "x"}};
    gt.objects = {g1, g2};

    const std::vector<schema::StructuredObjectRecord> preds = {
        simple_record(1, "A", {{"p", "x", 1.0}, {"q", "x", 1.0}, {"r", "x", 1.0}}),
        simple_record(2, "B", {{"p", "x", 1.0}, {"q", "y", 1.0}}),
    };
    const auto acc = evaluation::attribute_accuracy(preds, gt, toy);
    require(acc.total == 5 && acc.correct == 4, "K={3,2} case must grade 4 of 5");
    require(acc.overall() == 0.8, "K={3,2} case must yield exactly 0.8");

    // randomized sets against the full schema: order must not matter, and the
    // overall number must be the total-weighted mean of the class accuracies
    const auto schema_full =
        schema::load_schema(kSourceDir / "data" / "default_schema.json");
    std::mt19937 rng(909);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int set_i = 0; set_i < 100; ++set_i) {
        evaluation::GroundTruthSet rgt;
        rgt.image_ids = {"img"};
        std::vector<schema::StructuredObjectRecord> rpreds;
        long next_id = 1;
        const std::size_t n_cats = 2 + rng() % 5;
        for (std::size_t ci = 0; ci < n_cats; ++ci) {
            const auto& cat = schema_full.categories[rng() % schema_full.categories.size()];
            if (std::find(rgt.categories.begin(), rgt.categories.end(), cat.name) !=
                rgt.categories.end()) {
                continue;
            }
            rgt.categories.push_back(cat.name);
            const int n_objects = 1 + static_cast<int>(rng() % 5);
            for (int oi = 0; oi < n_objects; ++oi) {
                evaluation::GtObject g;
                g.id = next_id++;
                g.image_id = "img";
                g.category = cat.name;
                g.bbox = {0, 0, 10, 10};
                for (const auto& attr : cat.attributes) {
                    g.attributes[attr.name] = attr.kind == schema::AttributeKind::Enumerated
                                                  ? attr.allowed_values[rng() % attr.allowed_values.size()]
                                                  : "note " + std::to_string(g.id);
                }
                rgt.objects.push_back(g);

                if (unit(rng) < 0.1) continue; // no record at all -> all wrong
                std::vector<schema::AttributeValue> attrs;
                for (const auto& attr : cat.attributes) {
                    if (unit(rng) < 0.15) continue; // missing -> wrong
                    std::string v = g.attributes.at(attr.name);
                    if (unit(rng) > 0.7) {        // deliberately wrong value
                        if (attr.kind == schema::AttributeKind::Enumerated &&
                            attr.allowed_values.size() > 1) {
                            for (const auto& alt : attr.allowed_values) {
                                if (alt != v) {
                                    v = alt;
                                    break;
                                }
                            }
                        } else {
                            v += " (disputed)";
                        }
                    }
                    attrs.push_back({attr.name, v, unit(rng)});
                }
                rpreds.push_back(simple_record(g.id, cat.name, std::move(attrs)));
            }
        }

        const auto base = evaluation::attribute_accuracy(rpreds, rgt, schema_full);

        auto shuffled_preds = rpreds;
        std::shuffle(shuffled_preds.begin(), shuffled_preds.end(), rng);
        auto shuffled_gt = rgt;
        std::shuffle(shuffled_gt.objects.begin(), shuffled_gt.objects.end(), rng);
        const auto perm = evaluation::attribute_accuracy(shuffled_preds, shuffled_gt, schema_full);
        require(perm.correct == base.correct && perm.total == base.total &&
                    perm.per_class == base.per_class,
                "set " + std::to_string(set_i) + ": permutation changed the counts");

        long correct_sum = 0, total_sum = 0;
        double weighted = 0.0;
        for (const auto& [cls, counts] : base.per_class) {
            correct_sum += counts.first;
            total_sum += counts.second;
            if (counts.second > 0) {
                weighted += (static_cast<double>(counts.first) / counts.second) *
                            (static_cast<double>(counts.second) / base.total);
            }
        }
        require(correct_sum == base.correct && total_sum == base.total,
                "set " + std::to_string(set_i) + ": per-class counts do not partition the total");
        require_close(base.overall(), weighted, 1e-12,
                      "set " + std::to_string(set_i) + ": weighted-mean identity");
    }
}

// ---------------------------------------------------------------------------
// criterion 4: retrieval exactness against the frozen ranking oracle

std::vector<double> random_unit_vec(std::mt19937& rng, std::size_t dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = gauss(rng);
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

void expect_same_ranking(const retrieval::VectorStore& store, const std::vector<double>& q,
                         std::size_t k, const std::string& filter, const std::string& what) {
    const auto ref = retrieval_oracle::rank(store.entries(), q, k, filter);
    const auto got = store.query(
        q, k, filter.empty() ? std::nullopt : std::make_optional(filter));
    require(got.size() == ref.size(), what + ": result count");
    for (std::size_t i = 0; i < got.size(); ++i) {
        require(got[i].id == ref[i].id,
                what + ": rank " + std::to_string(i) + " id " + got[i].id + " != " + ref[i].id);
        require(std::abs(got[i].score - ref[i].score) <= 1e-12,
                what + ": rank " + std::to_string(i) + " score");
    }
}

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t dim = 32;
    const std::vector<std::string> cats = {"Bollard", "Traffic Light", "Fire Hydrant"};
    std::mt19937 rng(1717);

    for (const std::size_t n : {std::size_t{10}, std::size_t{100}, std::size_t{10000}}) {
        retrieval::VectorStore store(retrieval::Modality::Text, dim);
        for (std::size_t i = 0; i < n; ++i) {
            retrieval::StoreEntry e;
            char id[32];
            std::snprintf(id, sizeof id, "v%05zu", i);
            e.id = id;
            e.embedding = random_unit_vec(rng, dim);
            e.payload = {{"category", cats[i % cats.size()]}};
            store.add(std::move(e));
        }
        // five entries sharing one embedding force a tie group
        const auto tie_vec = random_unit_vec(rng, dim);
        for (char c = 'a'; c <= 'e'; ++c) {
            retrieval::StoreEntry e;
            e.id = std::string("tie_") + c;
            e.embedding = tie_vec;
            e.payload = {{"category", cats[0]}};
            store.add(std::move(e));
        }

        const std::string label = "n=" + std::to_string(n);
        const std::size_t queries = n == 10000 ? 25 : 50;
        for (std::size_t qi = 0; qi < queries; ++qi) {
            const auto q = random_unit_vec(rng, dim);
            for (const std::size_t depth : {std::size_t{7}, std::size_t{23}}) {
                expect_same_ranking(store, q, depth, "", label + " unfiltered");
                expect_same_ranking(store, q, depth, cats[qi % cats.size()], label + " filtered");
            }
        }
        // tie group: ids must come back in ascending order with equal scores
        const auto tie_hits = store.query(tie_vec, 5, std::nullopt);
        require(tie_hits.size() == 5, label + ": tie query size");
        for (std::size_t i = 0; i < 5; ++i) {
            require(tie_hits[i].id == std::string("tie_") + static_cast<char>('a' + i),
                    label + ": tie order at rank " + std::to_string(i));
        }
        expect_same_ranking(store, tie_vec, 9, "", label + " ties vs oracle");

        if (n == 10000) {
            const fs::path tmp =
                fs::temp_directory_path() / ("curbsight_accept_store_" + std::to_string(getpid()));
            store.save(tmp);
            const auto loaded = retrieval::VectorStore::load(tmp);
            fs::remove(tmp);
            for (std::size_t qi = 0; qi < 10; ++qi) {
                const auto q = random_unit_vec(rng, dim);
                const auto before = store.query(q, 23, std::nullopt);
                const auto after = loaded.query(q, 23, std::nullopt);
                require(before.size() == after.size(), "save/load: result count");
                for (std::size_t i = 0; i < before.size(); ++i) {
                    require(before[i].id == after[i].id && before[i].score == after[i].score,
                            "save/load: rank " + std::to_string(i) + " changed");
                }
            }
        }
    }

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(secs < 30.0, "runtime " + std::to_string(secs) + "s exceeds the 30s budget");
}

// ---------------------------------------------------------------------------
// criterion 5: cosine and low-rank merge numerics

void criterion_5() {
    std::mt19937 rng(2024);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int i = 0; i < 1000; ++i) {
        const std::size_t dim = 1 + rng() % 64;
        std::vector<double> a(dim), b(dim);
        for (auto& x : a) x = gauss(rng);
        for (auto& x : b) x = gauss(rng);
        if (numerics::norm(a) == 0.0 || numerics::norm(b) == 0.0) continue;
        const double ab = numerics::cosine_similarity(a, b);
        const double ba = numerics::cosine_similarity(b, a);
        require_close(ab, ba, 1e-12, "pair " + std::to_string(i) + ": cosine symmetry");

        const double lambda = std::exp((unit(rng) - 0.5) * 4.6); // ~[0.1, 10]
        auto scaled = a;
        for (auto& x : scaled) x *= lambda;
        require_close(numerics::cosine_similarity(scaled, b), ab, 1e-12,
                      "pair " + std::to_string(i) + ": positive-scale invariance");
    }

    for (int i = 0; i < 25; ++i) {
        const std::size_t m = 1 + rng() % 64, k = 1 + rng() % 64;
        const std::size_t r = 1 + rng() % std::min<std::size_t>(16, std::min(m, k));
        numerics::Matrix w(m, k), a(m, r), b(r, k);
        for (auto& x : w.values) x = gauss(rng);
        for (auto& x : a.values) x = gauss(rng);
        for (auto& x : b.values) x = gauss(rng);

        const auto merged = numerics::lora_merge(w, a, b);
        for (std::size_t row = 0; row < m; ++row) {
            for (std::size_t col = 0; col < k; ++col) {
                double ref = w.at(row, col);
                for (std::size_t t = 0; t < r; ++t) ref += a.at(row, t) * b.at(t, col);
                require_close(merged.at(row, col), ref, 1e-12,
                              "merge " + std::to_string(i) + " element (" + std::to_string(row) +
                                  "," + std::to_string(col) + ")");
            }
        }

        const numerics::Matrix zero(r, k, 0.0);
        const auto untouched = numerics::lora_merge(w, a, zero);
        require(untouched.values == w.values, "merge " + std::to_string(i) + ": B=0 must return W bit-exactly");
    }
}

// ---------------------------------------------------------------------------
// criterion 6: projection round trip on the default view set

void criterion_6() {
    const int pano_w = 8192, pano_h = 4096;
    const auto views = geometry::default_views(); // 4 x 2048x2048, fov 90
    require(views.size() == 4, "default view count");

    for (const auto& view : views) {
        for (int gy = 0; gy < 32; ++gy) {
            for (int gx = 0; gx < 32; ++gx) {
                const double px = (gx + 0.5) * view.width / 32.0;
                const double py = (gy + 0.5) * view.height / 32.0;

                const auto d1 = geometry::view_pixel_to_direction(view, px, py);
                require(std::abs(d1.norm() - 1.0) <= 1e-9, "forward direction unit norm");
                const auto pano_px = geometry::direction_to_pano_pixel(d1, pano_w, pano_h);
                const auto d2 =
                    geometry::pano_pixel_to_direction(pano_px[0], pano_px[1], pano_w, pano_h);
                require(std::abs(d2.norm() - 1.0) <= 1e-9, "inverse direction unit norm");
                const auto back = geometry::direction_to_view_pixel(view, d2);
                require(back.has_value(), "round trip left the view frustum");
                const double err =
                    std::max(std::abs((*back)[0] - px), std::abs((*back)[1] - py));
                require(err <= 0.5, view.view_id + ": round-trip error " + std::to_string(err) +
                                        "px at (" + std::to_string(px) + "," +
                                        std::to_string(py) + ")");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 7: end-to-end determinism of the annotate flow

void criterion_7(const fs::path& work) {
    const fs::path log = work / "cli.log";
    const std::string base = "--config \"" + (kFixtures / "config.mock.json").string() +
                             "\" --set stores.text=" + (work / "kb.store").string() +
                             " --set stores.visual=" + (work / "ex.store").string();

    run_cli_expect(0,
                   base + " ingest-kb \"" + (kFixtures / "kb" / "signal_inspection.md").string() +
                       "\" \"" + (kFixtures / "kb" / "asset_upkeep.md").string() + "\"",
                   log, "ingest-kb");
    run_cli_expect(0,
                   base + " index-exemplars \"" +
                       (kFixtures / "exemplars" / "annotations.json").string() + "\" \"" +
                       (kFixtures / "exemplars" / "images").string() + "\"",
                   log, "index-exemplars");

    const std::vector<int> jobs = {1, 4, 1, 2, 4, 1};
    const std::vector<std::string> outputs = {"manifest.json", "pano_001.records.jsonl",
                                              "pano_002.records.jsonl", "pano_003.records.jsonl"};
    std::vector<fs::path> run_dirs;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const fs::path out = work / ("annotate_" + std::to_string(i));
        run_dirs.push_back(out);
        run_cli_expect(0,
                       base + " annotate \"" + (kFixtures / "panos").string() + "\" --out \"" +
                           out.string() + "\" --jobs " + std::to_string(jobs[i]),
                       log, "annotate run " + std::to_string(i));
    }
    for (std::size_t i = 1; i < run_dirs.size(); ++i) {
        for (const auto& name : outputs) {
            require(read_file(run_dirs[0] / name) == read_file(run_dirs[i] / name),
                    name + " differs between run 0 (--jobs 1) and run " + std::to_string(i) +
                        " (--jobs " + std::to_string(jobs[i]) + ")");
        }
    }

    // every ok / repair_applied record must pass schema validation
    const auto schema_full = schema::load_schema(kSourceDir / "data" / "default_schema.json");
    int n_ok = 0, n_repaired = 0;
    for (std::size_t fi = 1; fi < outputs.size(); ++fi) {
        std::istringstream in(read_file(run_dirs[0] / outputs[fi]));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto rec = schema::record_from_json(nlohmann::json::parse(line));
            require(rec.status != schema::RecordStatus::Invalid,
                    outputs[fi] + ": unexpected invalid record " + rec.object_id);
            (rec.status == schema::RecordStatus::Ok ? n_ok : n_repaired) += 1;
            const auto check = schema::validate_record(rec, schema_full);
            if (!check.valid) {
                throw CheckFailure(outputs[fi] + ": record " + rec.object_id +
                                   " failed validation: " + check.violations[0].message);
            }
        }
    }
    require(n_ok > 0 && n_repaired > 0,
            "fixture corpus must exercise both ok and repair_applied records");

    const auto manifest = read_json(run_dirs[0] / "manifest.json");
    require(manifest["totals"]["records"] == n_ok + n_repaired &&
                manifest["totals"]["repairs"] == n_repaired &&
                manifest["totals"]["invalids"] == 0 && manifest["totals"]["failed"] == 0,
            "manifest totals disagree with the records on disk");

    // fault injection: a VLM that never produces JSON must yield invalid
    // records, truthful stats, and a non-zero exit
    const fs::path bad_out = work / "annotate_malformed";
    run_cli_expect(1,
                   base + " --set services.mock.vlm_mode=malformed annotate \"" +
                       (kFixtures / "panos").string() + "\" --out \"" + bad_out.string() +
                       "\" --jobs 2",
                   log, "malformed-VLM annotate");
    const auto bad_manifest = read_json(bad_out / "manifest.json");
    require(bad_manifest["totals"]["invalids"] == bad_manifest["totals"]["records"] &&
                bad_manifest["totals"]["records"] == n_ok + n_repaired,
            "malformed-VLM manifest stats are wrong");
    for (std::size_t fi = 1; fi < outputs.size(); ++fi) {
        std::istringstream in(read_file(bad_out / outputs[fi]));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto rec = schema::record_from_json(nlohmann::json::parse(line));
            require(rec.status == schema::RecordStatus::Invalid,
                    "malformed-VLM record " + rec.object_id + " is not invalid");
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 8: transcript repair corpus

void criterion_8() {
    const auto schema_full = schema::load_schema(kSourceDir / "data" / "default_schema.json");
    const auto corpus = read_json(kFixtures / "repair" / "transcripts.json");
    require(corpus.is_array() && corpus.size() == 30, "corpus must hold 30 transcripts");

    for (const auto& entry : corpus) {
        const std::string id = entry.at("id");
        const std::string raw = entry.at("raw");
        const std::string expect = entry.at("expect");
        const std::string category = entry.at("category");
        const bool has_brace = raw.find('{') != std::string::npos;

        if (expect == "error") {
            require(!has_brace, id + ": error cases must be brace-free");
            try {
                (void)schema::extract_and_repair(raw, schema_full, category);
                throw CheckFailure(id + ": expected a hard error, got a record");
            } catch (const Error&) {
                // expected
            }
            continue;
        }

        require(has_brace, id + ": non-error cases must carry a brace block");
        schema::StructuredObjectRecord rec;
        try {
            rec = schema::extract_and_repair(raw, schema_full, category);
        } catch (const Error& e) {
            throw CheckFailure(id + ": repair failed on a brace-bearing transcript: " + e.what());
        }
        const auto want_status = expect == "ok" ? schema::RecordStatus::Ok
                                                : schema::RecordStatus::RepairApplied;
        require(rec.status == want_status,
                id + ": status " + schema::to_string(rec.status) + ", want " + expect);
        require(rec.category == category,
                id + ": category '" + rec.category + "', want '" + category + "'");
        const auto check = schema::validate_record(rec, schema_full);
        require(check.valid, id + ": repaired record fails validation");
    }
}

// ---------------------------------------------------------------------------
// criterion 9: report shape and aggregate identities

// rows of the table that starts at `title`, up to the first blank line,
// skipping the column header and the dashed separator
std::vector<std::string> table_rows(const std::vector<std::string>& lines,
                                    const std::string& title, std::size_t from = 0) {
    auto it = std::find(lines.begin() + static_cast<long>(from), lines.end(), title);
    require(it != lines.end(), "rendered report lacks the '" + title + "' table");
    std::vector<std::string> rows;
    for (auto cur = it + 3; cur != lines.end() && !cur->empty(); ++cur) rows.push_back(*cur);
    return rows;
}

void criterion_9() {
    const auto schema_full = schema::load_schema(kSourceDir / "data" / "default_schema.json");
    const auto gt = evaluation::load_ground_truth(kFixtures / "eval" / "gt.json");

    // per-class report from records predictions
    const auto recs =
        evaluation::load_predictions(kFixtures / "eval" / "pred.records.jsonl", gt);
    const auto report = evaluation::build_report(gt, recs, &schema_full, false);

    const auto& det = report.main.detection;
    require(det.per_class.size() == 10, "detection table must carry 10 class rows");
    double map_sum = 0.0, map50_sum = 0.0, map75_sum = 0.0, mar_sum = 0.0;
    for (const auto& cls : det.per_class) {
        require(cls.defined, "class '" + cls.category + "' has no gt instances");
        map_sum += cls.ap;
        map50_sum += cls.ap50;
        map75_sum += cls.ap75;
        mar_sum += cls.ar;
    }
    require_close(det.map, map_sum / 10.0, 1e-12, "detection All row (mAP)");
    require_close(det.map50, map50_sum / 10.0, 1e-12, "detection All row (mAP@50)");
    require_close(det.map75, map75_sum / 10.0, 1e-12, "detection All row (mAP@75)");
    require_close(det.mar, mar_sum / 10.0, 1e-12, "detection All row (mAR)");

    require(report.main.attributes.has_value(), "records input must produce attribute rows");
    const auto& attrs = *report.main.attributes;
    require(attrs.per_class.size() == 10, "attribute table must carry 10 class rows");
    double acc_sum = 0.0;
    for (const auto& [cls, counts] : attrs.per_class) {
        require(counts.second > 0, "class '" + cls + "' graded zero attributes");
        acc_sum += static_cast<double>(counts.first) / counts.second;
    }
    require_close(attrs.macro_mean(), acc_sum / 10.0, 1e-12, "attribute All row");

    const auto lines = split_lines(evaluation::render_report_text(report));
    const auto det_rows = table_rows(lines, "Detection (per class)");
    require(det_rows.size() == 11, "detection table must render 10 class rows + All");
    require(det_rows.back().rfind("All", 0) == 0, "detection table must close with the All row");
    const auto attr_rows = table_rows(lines, "Attribute recognition (per class)");
    require(attr_rows.size() == 11, "attribute table must render 10 class rows + All");
    require(attr_rows.back().rfind("All", 0) == 0, "attribute table must close with the All row");

    // cross-city grouping from run-tagged predictions
    const auto runs = evaluation::load_predictions(kFixtures / "eval" / "pred_runs.json", gt);
    const auto city_report = evaluation::build_report(gt, runs, &schema_full, true);
    require(city_report.groups.size() == 4, "city mode must produce 4 groups");
    const std::vector<std::array<std::string, 3>> want = {
        {"Wuhan", "Wuhan", "In-domain"},
        {"Wuhan", "Shanghai", "Cross-city"},
        {"Shanghai", "Shanghai", "In-domain"},
        {"Shanghai", "Wuhan", "Cross-city"},
    };
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& g = city_report.groups[i];
        require(g.train_city == want[i][0] && g.test_city == want[i][1] &&
                    g.setting == want[i][2],
                "group " + std::to_string(i) + " is " + g.train_city + "/" + g.test_city + "/" +
                    g.setting);
        require(g.detection.per_class.size() == 10,
                "group " + std::to_string(i) + " lost class rows");
    }

    const auto city_lines = split_lines(evaluation::render_report_text(city_report));
    auto header = std::find_if(city_lines.begin(), city_lines.end(), [](const std::string& l) {
        return l.rfind("Train City", 0) == 0;
    });
    require(header != city_lines.end(), "multi-city summary table is missing");
    for (std::size_t i = 0; i < 4; ++i) {
        const auto toks = tokens_of(*(header + 1 + static_cast<long>(i)));
        require(toks.size() == 5, "summary row " + std::to_string(i) + " malformed");
        require(toks[0] == want[i][0] && toks[1] == want[i][1] && toks[2] == want[i][2],
                "summary row " + std::to_string(i) + " is " + toks[0] + "/" + toks[1] + "/" +
                    toks[2]);
    }
}

} // namespace

int main() {
    const fs::path work =
        fs::temp_directory_path() / ("curbsight_acceptance_" + std::to_string(getpid()));
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    struct Criterion {
        int id;
        std::string label;
        std::function<void()> body;
    };
    const std::vector<Criterion> criteria = {
        {1, "AP engine matches the frozen PR-integrator oracle on 200 scenes", criterion_1},
        {2, "IoU reference values (identity, disjoint, 1/7)", criterion_2},
        {3, "attribute accuracy: exact 0.8 fixture, permutation and mean identities", criterion_3},
        {4, "retrieval ranking is exact vs. oracle incl. ties and save/load", criterion_4},
        {5, "cosine invariances and low-rank merge vs. dense oracle", criterion_5},
        {6, "view<->panorama round trip within 0.5px on all default views", criterion_6},
        {7, "annotate is byte-deterministic; records validate; faults surface", [&] { criterion_7(work); }},
        {8, "transcript repair corpus: statuses exact, brace-free inputs hard-error", criterion_8},
        {9, "report tables: 10+All rows, mean identities, 4-row cross-city summary", criterion_9},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string verdict = "PASS", detail;
        try {
            c.body();
        } catch (const std::exception& e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << verdict << " criterion " << c.id << ": " << c.label << " [" << std::fixed
             << std::setprecision(1) << secs << "s]";
        if (!detail.empty()) line << " — " << detail;
        std::cout << line.str() << std::endl;
    }
    std::cout << "NOTE criterion 10: live-endpoint smoke run is manual by design "
                 "(see README, \"Running against real services\")."
              << std::endl;

    fs::remove_all(work, ec);
    return failures == 0 ? 0 : 1;
}
