#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "curbsight/geometry.hpp"
#include "curbsight/schema.hpp"

namespace curbsight::clients {

struct ServiceEndpoint {
    std::string base_url;
    std::string model_name;
    std::string auth_env;   // name of the env var holding the bearer token
    double timeout_s = 30.0;
    int max_retries = 2;
};

struct ImageRef {
    std::string id;
    cv::Mat pixels;
};

struct Detection {
    std::string label;
    double confidence = 0.0;
    geometry::BoundingBox bbox; // view space
    std::string view_id;
};

// Append-only JSONL transcript of model traffic. Auth material never
// reaches this file; bodies are logged verbatim otherwise.
class TraceLog {
  public:
    explicit TraceLog(const std::filesystem::path& path);
    void append(const std::string& service, nlohmann::json entry);

  private:
    std::ofstream stream_;
    std::mutex mutex_;
};

class Detector {
  public:
    virtual ~Detector() = default;
    // vocabulary: category phrases the detector grounds against; must be
    // nonempty. Returns detections with confidence >= conf_threshold and
    // raw backend labels (callers fold them onto schema names).
    virtual std::vector<Detection> detect(const ImageRef& image,
                                          const std::vector<std::string>& vocabulary,
                                          double conf_threshold) = 0;
};

class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed_text(const std::string& body) = 0; // unit norm
};

class ImageEmbedder {
  public:
    virtual ~ImageEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed_image(const cv::Mat& image) = 0; // unit norm
};

class VlmClient {
  public:
    virtual ~VlmClient() = default;
    // images ordered crop first, then the full scene; prompt nonempty
    virtual std::string complete(const std::vector<ImageRef>& images,
                                 const std::string& prompt) = 0;
};

// Map raw detector labels onto canonical schema category names
// (case/synonym folding); detections whose label resolves to nothing are
// dropped, and the drop count is reported via `dropped` when given.
std::vector<Detection> normalize_labels(const std::vector<Detection>& dets,
                                        const schema::AttributeSchema& schema,
                                        int* dropped = nullptr);

// --- deterministic offline backends -------------------------------------

// Hashed bag-of-features embedder: tokens (text) or pixel-block digests
// (images) are folded into `dim` signed buckets and the result normalized.
// Output depends on input bytes only.
class MockTextEmbedder final : public TextEmbedder {
  public:
    explicit MockTextEmbedder(std::size_t dim);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed_text(const std::string& body) override;

  private:
    std::size_t dim_;
};

class MockImageEmbedder final : public ImageEmbedder {
  public:
    explicit MockImageEmbedder(std::size_t dim);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed_image(const cv::Mat& image) override;

  private:
    std::size_t dim_;
};

// Fixture-driven detector: a JSON map from image id to detection lists.
// Ids the fixture does not mention yield no detections.
class MockDetector final : public Detector {
  public:
    explicit MockDetector(const std::filesystem::path& fixture_file);
    explicit MockDetector(const nlohmann::json& fixture);
    std::vector<Detection> detect(const ImageRef& image,
                                  const std::vector<std::string>& vocabulary,
                                  double conf_threshold) override;

  private:
    std::map<std::string, std::vector<Detection>> fixtures_;
};

enum class MockVlmMode { Fixture, Malformed, Echo };

// Fixture mode renders the fixture's category/attributes for the crop id
// (falling back to hash-derived values for unknown ids) through
// response_template, which must contain a "{json}" placeholder. Malformed
// mode emits brace-free prose; echo mode returns the prompt.
class MockVlm final : public VlmClient {
  public:
    MockVlm(const schema::AttributeSchema& schema, nlohmann::json fixtures, MockVlmMode mode,
            std::string response_template);
    static MockVlm from_file(const schema::AttributeSchema& schema,
                             const std::filesystem::path& fixture_file, MockVlmMode mode,
                             std::string response_template);
    std::string complete(const std::vector<ImageRef>& images,
                         const std::string& prompt) override;

  private:
    const schema::AttributeSchema& schema_;
    nlohmann::json fixtures_;
    MockVlmMode mode_;
    std::string template_;
};

// --- HTTP backends --------------------------------------------------------

// Shared retry/auth/trace plumbing; bodies follow the common embeddings and
// chat-completions JSON shapes, the detector a minimal custom contract.
struct HttpOptions {
    std::shared_ptr<TraceLog> trace;  // optional
    int max_concurrent = 4;
    // retries sleep 2^attempt * 250ms plus jitter; a fixed seed makes the
    // jitter reproducible in tests
    std::optional<std::uint64_t> jitter_seed;
};

std::unique_ptr<Detector> make_http_detector(ServiceEndpoint endpoint, HttpOptions options);
std::unique_ptr<TextEmbedder> make_http_text_embedder(ServiceEndpoint endpoint,
                                                      std::size_t dim, HttpOptions options);
std::unique_ptr<ImageEmbedder> make_http_image_embedder(ServiceEndpoint endpoint,
                                                        std::size_t dim, HttpOptions options);
std::unique_ptr<VlmClient> make_http_vlm(ServiceEndpoint endpoint, HttpOptions options);

// Resolve the bearer token for an endpoint from its environment variable.
// Empty auth_env means anonymous access; a declared but unset variable is a
// configuration error.
std::string resolve_auth_token(const ServiceEndpoint& endpoint);

} // namespace curbsight::clients
