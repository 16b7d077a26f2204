#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <opencv2/imgcodecs.hpp>

#include "curbsight/error.hpp"
#include "curbsight/evaluation.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/numerics.hpp"
#include "curbsight/retrieval.hpp"
#include "curbsight/schema.hpp"

namespace py = pybind11;
using namespace curbsight;

namespace {

// JSON payloads cross the boundary through the stdlib json module, so the
// python side sees plain dicts/lists rather than an opaque wrapper.
py::object json_to_py(const nlohmann::json& j) {
    if (j.is_null()) return py::none();
    return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::handle& obj) {
    if (obj.is_none()) return nlohmann::json();
    const auto dumped =
        py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return nlohmann::json::parse(dumped);
}

evaluation::EvalReport report_from_files(const std::filesystem::path& gt_path,
                                         const std::filesystem::path& pred_path,
                                         const schema::AttributeSchema* sch,
                                         bool group_by_city) {
    const auto gt = evaluation::load_ground_truth(gt_path);
    const auto preds = evaluation::load_predictions(pred_path, gt);
    return evaluation::build_report(gt, preds, sch, group_by_city);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "panorama street-furniture annotation core";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(PyExc_RuntimeError, e.what());
        }
    });

    // --- numerics ------------------------------------------------------------

    m.def(
        "cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return numerics::cosine_similarity(a, b);
        },
        py::arg("a"), py::arg("b"));

    py::class_<numerics::Matrix>(m, "Matrix")
        .def(py::init<std::size_t, std::size_t, double>(), py::arg("rows"), py::arg("cols"),
             py::arg("fill") = 0.0)
        .def_readonly("rows", &numerics::Matrix::rows)
        .def_readonly("cols", &numerics::Matrix::cols)
        .def_readwrite("values", &numerics::Matrix::values)
        .def("at", [](const numerics::Matrix& self, std::size_t r, std::size_t c) {
            return self.at(r, c);
        });

    m.def("matmul", &numerics::matmul, py::arg("a"), py::arg("b"));
    m.def("lora_merge", &numerics::lora_merge, py::arg("w"), py::arg("a"), py::arg("b"));

    // --- geometry --------------------------------------------------------------

    py::class_<geometry::BoundingBox>(m, "BoundingBox")
        .def(py::init([](double x0, double y0, double x1, double y1) {
                 return geometry::BoundingBox{x0, y0, x1, y1};
             }),
             py::arg("x_min"), py::arg("y_min"), py::arg("x_max"), py::arg("y_max"))
        .def_readwrite("x_min", &geometry::BoundingBox::x_min)
        .def_readwrite("y_min", &geometry::BoundingBox::y_min)
        .def_readwrite("x_max", &geometry::BoundingBox::x_max)
        .def_readwrite("y_max", &geometry::BoundingBox::y_max)
        .def("width", &geometry::BoundingBox::width)
        .def("height", &geometry::BoundingBox::height)
        .def("area", &geometry::BoundingBox::area)
        .def("valid", &geometry::BoundingBox::valid)
        .def("__repr__", [](const geometry::BoundingBox& b) {
            return "BoundingBox(" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) +
                   ", " + std::to_string(b.x_max) + ", " + std::to_string(b.y_max) + ")";
        });

    py::class_<geometry::PerspectiveView>(m, "PerspectiveView")
        .def(py::init([](std::string id, double yaw, double pitch, double fov, int w, int h) {
                 return geometry::PerspectiveView{std::move(id), yaw, pitch, fov, w, h};
             }),
             py::arg("view_id"), py::arg("yaw_deg"), py::arg("pitch_deg"), py::arg("fov_deg"),
             py::arg("width"), py::arg("height"))
        .def_readwrite("view_id", &geometry::PerspectiveView::view_id)
        .def_readwrite("yaw_deg", &geometry::PerspectiveView::yaw_deg)
        .def_readwrite("pitch_deg", &geometry::PerspectiveView::pitch_deg)
        .def_readwrite("fov_deg", &geometry::PerspectiveView::fov_deg)
        .def_readwrite("width", &geometry::PerspectiveView::width)
        .def_readwrite("height", &geometry::PerspectiveView::height);

    py::class_<geometry::PanoBox>(m, "PanoBox")
        .def(py::init([](const geometry::BoundingBox& box, bool wraps) {
                 return geometry::PanoBox{box, wraps};
             }),
             py::arg("box"), py::arg("wraps_seam") = false)
        .def_readwrite("box", &geometry::PanoBox::box)
        .def_readwrite("wraps_seam", &geometry::PanoBox::wraps_seam);

    m.def("default_views", &geometry::default_views, py::arg("size") = 2048);
    m.def(
        "view_pixel_to_direction",
        [](const geometry::PerspectiveView& v, double px, double py) {
            const auto d = geometry::view_pixel_to_direction(v, px, py);
            return std::make_tuple(d.x, d.y, d.z);
        },
        py::arg("view"), py::arg("px"), py::arg("py"));
    m.def(
        "direction_to_pano_pixel",
        [](double x, double y, double z, int pano_w, int pano_h) {
            const auto p = geometry::direction_to_pano_pixel({x, y, z}, pano_w, pano_h);
            return std::make_tuple(p[0], p[1]);
        },
        py::arg("x"), py::arg("y"), py::arg("z"), py::arg("pano_w"), py::arg("pano_h"));
    m.def(
        "pano_pixel_to_direction",
        [](double px, double py, int pano_w, int pano_h) {
            const auto d = geometry::pano_pixel_to_direction(px, py, pano_w, pano_h);
            return std::make_tuple(d.x, d.y, d.z);
        },
        py::arg("px"), py::arg("py"), py::arg("pano_w"), py::arg("pano_h"));
    m.def(
        "direction_to_view_pixel",
        [](const geometry::PerspectiveView& v, double x, double y, double z)
            -> std::optional<std::pair<double, double>> {
            const auto p = geometry::direction_to_view_pixel(v, {x, y, z});
            if (!p) return std::nullopt;
            return std::make_pair((*p)[0], (*p)[1]);
        },
        py::arg("view"), py::arg("x"), py::arg("y"), py::arg("z"));
    m.def("view_bbox_to_pano", &geometry::view_bbox_to_pano, py::arg("view"), py::arg("box"),
          py::arg("pano_w"), py::arg("pano_h"));
    m.def("pano_box_to_view", &geometry::pano_box_to_view, py::arg("view"), py::arg("pano_box"),
          py::arg("pano_w"), py::arg("pano_h"));
    m.def(
        "split_panorama",
        [](const std::filesystem::path& image, const std::filesystem::path& out_dir, int size) {
            cv::Mat pixels = cv::imread(image.string(), cv::IMREAD_COLOR);
            if (pixels.empty()) throw Error("cannot read image: " + image.string());
            geometry::EquirectImage pano{image.stem().string(), std::move(pixels)};
            std::filesystem::create_directories(out_dir);
            std::vector<std::string> written;
            for (const auto& [view_id, raster] :
                 geometry::split_panorama(pano, geometry::default_views(size))) {
                const auto out = out_dir / (pano.image_id + "." + view_id + ".png");
                if (!cv::imwrite(out.string(), raster)) {
                    throw Error("cannot write view: " + out.string());
                }
                written.push_back(out.string());
            }
            return written;
        },
        py::arg("image"), py::arg("out_dir"), py::arg("size") = 2048,
        "Render the default perspective views of an equirectangular panorama "
        "to <stem>.<view_id>.png files; returns the written paths.");

    // --- attribute schema ------------------------------------------------------

    py::class_<schema::AttributeSchema>(m, "AttributeSchema")
        .def_readonly("version", &schema::AttributeSchema::version)
        .def("category_names",
             [](const schema::AttributeSchema& s) {
                 std::vector<std::string> names;
                 for (const auto& c : s.categories) names.push_back(c.name);
                 return names;
             })
        .def("attribute_names",
             [](const schema::AttributeSchema& s, const std::string& category) {
                 const auto* cat = s.find_category(category);
                 if (cat == nullptr) throw Error("unknown category: " + category);
                 std::vector<std::string> names;
                 for (const auto& a : cat->attributes) names.push_back(a.name);
                 return names;
             },
             py::arg("category"))
        .def("__len__",
             [](const schema::AttributeSchema& s) { return s.categories.size(); });

    m.def("load_schema", &schema::load_schema, py::arg("path"));
    m.def("parse_schema", &schema::parse_schema, py::arg("json_text"));

    m.def(
        "extract_and_repair",
        [](const std::string& raw, const schema::AttributeSchema& sch,
           const std::string& expected_category) {
            return json_to_py(schema::record_to_json(
                schema::extract_and_repair(raw, sch, expected_category)));
        },
        py::arg("raw"), py::arg("schema"), py::arg("expected_category"),
        "Pull the first parseable JSON object out of model text and coerce it "
        "into a schema-conformant record dict. Raises RuntimeError when no "
        "braced block parses.");

    m.def(
        "validate_record",
        [](const py::dict& record, const schema::AttributeSchema& sch) {
            const auto rec = schema::record_from_json(py_to_json(record));
            const auto report = schema::validate_record(rec, sch);
            nlohmann::json violations = nlohmann::json::array();
            for (const auto& v : report.violations) {
                violations.push_back({{"path", v.path}, {"code", v.code}, {"message", v.message}});
            }
            return json_to_py({{"valid", report.valid}, {"violations", violations}});
        },
        py::arg("record"), py::arg("schema"));

    // --- retrieval ----------------------------------------------------------

    py::class_<retrieval::VectorStore>(m, "VectorStore")
        .def(py::init([](const std::string& modality, std::size_t dim) {
                 return retrieval::VectorStore(retrieval::modality_from_string(modality), dim);
             }),
             py::arg("modality"), py::arg("dim"))
        .def_property_readonly("dim", &retrieval::VectorStore::dim)
        .def_property_readonly(
            "modality",
            [](const retrieval::VectorStore& s) { return retrieval::to_string(s.modality()); })
        .def("__len__", &retrieval::VectorStore::size)
        .def(
            "add",
            [](retrieval::VectorStore& s, const std::string& id,
               const std::vector<double>& embedding, const py::object& payload) {
                s.add({id, embedding, py_to_json(payload)});
            },
            py::arg("id"), py::arg("embedding"), py::arg("payload") = py::none())
        .def(
            "query",
            [](const retrieval::VectorStore& s, const std::vector<double>& embedding,
               std::size_t k, const std::optional<std::string>& category) {
                py::list out;
                for (const auto& hit : s.query(embedding, k, category)) {
                    py::dict d;
                    d["id"] = hit.id;
                    d["score"] = hit.score;
                    d["payload"] = json_to_py(hit.payload);
                    out.append(std::move(d));
                }
                return out;
            },
            py::arg("embedding"), py::arg("k"), py::arg("category") = py::none())
        .def("has_category", &retrieval::VectorStore::has_category, py::arg("category"))
        .def("save", &retrieval::VectorStore::save, py::arg("path"))
        .def_static("load", &retrieval::VectorStore::load, py::arg("path"))
        .def("content_hash", &retrieval::VectorStore::content_hash);

    m.def(
        "chunk_document",
        [](const std::string& text, std::size_t max_chars, std::size_t overlap) {
            std::vector<std::pair<std::size_t, std::size_t>> spans;
            for (const auto& s : retrieval::chunk_document(text, max_chars, overlap)) {
                spans.emplace_back(s.begin, s.end);
            }
            return spans;
        },
        py::arg("text"), py::arg("max_chars") = 512, py::arg("overlap") = 64);

    // --- evaluation -----------------------------------------------------------

    m.def(
        "iou",
        [](const geometry::BoundingBox& a, const geometry::BoundingBox& b) {
            return evaluation::iou(a, b);
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "evaluate_files",
        [](const std::filesystem::path& gt, const std::filesystem::path& preds,
           const schema::AttributeSchema* sch, bool group_by_city) {
            return json_to_py(
                evaluation::report_to_json(report_from_files(gt, preds, sch, group_by_city)));
        },
        py::arg("gt"), py::arg("predictions"), py::arg("schema") = nullptr,
        py::arg("group_by_city") = false,
        "Detection + attribute report as a dict; predictions may be a COCO "
        "results array or the pipeline's records JSONL.");

    m.def(
        "evaluate_files_text",
        [](const std::filesystem::path& gt, const std::filesystem::path& preds,
           const schema::AttributeSchema* sch, bool group_by_city) {
            return evaluation::render_report_text(
                report_from_files(gt, preds, sch, group_by_city));
        },
        py::arg("gt"), py::arg("predictions"), py::arg("schema") = nullptr,
        py::arg("group_by_city") = false, "The same report rendered as fixed-width tables.");

    m.attr("__version__") = "0.1.0";
}
