#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vecdraw/objective.hpp"

/// Newline-delimited JSON protocol spoken with an out-of-process scoring
/// service. See docs/protocol.md for the frame format.
namespace vecdraw::protocol {

using Json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kAddressEnvVar = "VECDRAW_SERVICE_ADDR";

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Dense float32 tensor as carried on the wire.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  [[nodiscard]] std::size_t element_count() const;
};

/// {"dtype": "f32le", "shape": [...], "data": base64(little-endian f32)}
Json encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const Json& j);

struct Frame {
  std::string op;
  std::int64_t id = 0;
  Json payload = Json::object();
};

/// One line of compact JSON, terminated by '\n'.
std::string serialize_frame(const Frame& frame);
/// Throws ProtocolError on malformed lines.
Frame parse_frame(std::string_view line);

/// Bidirectional line-oriented byte stream.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Writes `line` followed by '\n'. Throws TransportError.
  virtual void write_line(std::string_view line) = 0;
  /// Next line without its terminator, or nullopt at end of stream.
  /// Throws TransportError on timeout or I/O failure.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
};

/// Line channel over POSIX file descriptors (sockets or pipes).
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, bool owns_fds);
  ~FdChannel() override;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

  /// Closes the write side (signals EOF to the peer on pipes / half-closes sockets).
  void shutdown_write();
  /// Shuts a socket down in both directions, waking any blocked reader.
  void shutdown_both();

 protected:
  int read_fd_;
  int write_fd_;
  bool owns_;
  std::string buffer_;
};

/// Connects to host:port. Throws TransportError when refused or timed out.
std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port,
                                         std::chrono::milliseconds timeout);

/// Launches argv[0] with the given arguments and talks to it over its stdin/stdout.
std::unique_ptr<LineChannel> spawn_subprocess(const std::vector<std::string>& argv);

/// Two connected in-process channels (a socketpair).
std::pair<std::unique_ptr<LineChannel>, std::unique_ptr<LineChannel>> loopback_pair();

/// "host:port", "tcp://host:port" or "stdio:<command> [args...]".
struct ServiceAddress {
  enum class Kind { tcp, subprocess };
  Kind kind = Kind::tcp;
  std::string host;
  int port = 0;
  std::vector<std::string> argv;

  /// Throws ConfigError.
  static ServiceAddress parse(std::string_view spec);
};

/// ScoringBackend implemented by a remote service. The handshake (info op)
/// runs in the constructor.
class ServiceBackend final : public ScoringBackend {
 public:
  ServiceBackend(std::unique_ptr<LineChannel> channel, std::chrono::milliseconds timeout,
                 std::optional<std::size_t> expected_dim = std::nullopt);

  [[nodiscard]] std::size_t embedding_dim() const override { return dim_; }
  [[nodiscard]] std::string model_id() const override { return model_; }
  std::vector<Embedding> encode_text(std::span<const std::string> texts) override;
  std::vector<Embedding> encode_images(std::span<const ImageTensor> batch) override;
  ScoreResult score_images(std::span<const ImageTensor> batch,
                           const CompiledPrompts& prompts) override;

  /// Debug op; only answered by servers started with echo enabled.
  Json echo(const Json& payload);

  /// Raw request/response exchange. Response ids are matched against the
  /// request id; stale responses (lower ids) are skipped.
  Json call(const std::string& op, const Json& payload);

  [[nodiscard]] std::int64_t last_request_id() const { return next_id_ - 1; }

 private:
  std::unique_ptr<LineChannel> channel_;
  std::chrono::milliseconds timeout_;
  std::int64_t next_id_ = 1;
  std::size_t dim_ = 0;
  std::string model_;
};

std::unique_ptr<ServiceBackend> connect(const ServiceAddress& address, double timeout_s,
                                        std::optional<std::size_t> expected_dim = kEmbeddingDim);

// --- server side ------------------------------------------------------------

Tensor batch_to_tensor(std::span<const ImageTensor> batch);
std::vector<ImageTensor> tensor_to_batch(const Tensor& tensor);

struct ServeOptions {
  bool enable_echo = false;
};

/// Answers one request frame. Failures become error frames.
std::string handle_request_line(std::string_view line, ScoringBackend& backend,
                                const ServeOptions& options);

/// Serves requests until the peer closes the stream.
void serve(LineChannel& channel, ScoringBackend& backend, const ServeOptions& options = {});

/// In-process server thread speaking the protocol over a socketpair.
class LoopbackServer {
 public:
  LoopbackServer(ScoringBackend& backend, ServeOptions options = {});
  ~LoopbackServer();
  LoopbackServer(const LoopbackServer&) = delete;
  LoopbackServer& operator=(const LoopbackServer&) = delete;

  /// Client end of the stream; may be taken once.
  std::unique_ptr<LineChannel> take_client();

 private:
  std::unique_ptr<LineChannel> client_;
  std::unique_ptr<LineChannel> server_;
  std::thread thread_;
};

/// Listening TCP socket on the loopback interface.
class TcpListener {
 public:
  explicit TcpListener(int port = 0, const std::string& host = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  [[nodiscard]] int port() const { return port_; }
  std::unique_ptr<LineChannel> accept();

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace vecdraw::protocol
