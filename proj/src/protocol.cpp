#include "vecdraw/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <functional>
#include <mutex>
#include <sstream>

#include "vecdraw/error.hpp"

namespace vecdraw::protocol {

namespace {

std::string errno_message(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
}

}  // namespace

// --- base64 / tensors -------------------------------------------------------

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) return out;
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64 payload length is not a multiple of 4");
  if (text.empty()) return {};
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ProtocolError("invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

Json encode_tensor(const Tensor& tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw ContractError("tensor shape does not match its data length");
  }
  std::vector<std::uint8_t> bytes(4 * tensor.data.size());
  for (std::size_t i = 0; i < tensor.data.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(tensor.data[i]));
    std::memcpy(bytes.data() + 4 * i, &le, 4);
  }
  return Json{{"dtype", "f32le"}, {"shape", tensor.shape}, {"data", base64_encode(bytes)}};
}

Tensor decode_tensor(const Json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw ProtocolError("tensor object needs 'shape' and 'data'");
  }
  if (j.contains("dtype") && j.at("dtype") != "f32le") {
    throw ProtocolError("unsupported tensor dtype " + j.at("dtype").dump());
  }
  Tensor t;
  try {
    t.shape = j.at("shape").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("tensor shape must be an array of non-negative integers");
  }
  if (!j.at("data").is_string()) throw ProtocolError("tensor data must be a base64 string");
  const auto bytes = base64_decode(j.at("data").get_ref<const std::string&>());
  if (bytes.size() != 4 * t.element_count()) {
    throw ProtocolError("tensor carries " + std::to_string(bytes.size()) + " bytes, shape needs " +
                        std::to_string(4 * t.element_count()));
  }
  t.data.resize(t.element_count());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    t.data[i] = std::bit_cast<float>(to_le(le));
  }
  return t;
}

// --- frames -----------------------------------------------------------------

std::string serialize_frame(const Frame& frame) {
  Json j{{"id", frame.id}, {"op", frame.op}, {"payload", frame.payload}};
  return j.dump() + "\n";
}

Frame parse_frame(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("unparseable frame: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("frame is not a JSON object");
  if (!j.contains("id") || !j.at("id").is_number_integer()) {
    throw ProtocolError("frame lacks an integer 'id'");
  }
  Frame f;
  f.id = j.at("id").get<std::int64_t>();
  if (!j.contains("op") || !j.at("op").is_string()) {
    throw ProtocolError("frame " + std::to_string(f.id) + " lacks a string 'op'");
  }
  f.op = j.at("op").get<std::string>();
  f.payload = j.contains("payload") ? j.at("payload") : Json::object();
  return f;
}

// --- channels ---------------------------------------------------------------

FdChannel::FdChannel(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns_fds) {
  ignore_sigpipe_once();
}

FdChannel::~FdChannel() {
  if (!owns_) return;
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
}

void FdChannel::shutdown_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else {
    ::close(write_fd_);
    write_fd_ = -1;
  }
}

void FdChannel::shutdown_both() {
  if (read_fd_ >= 0 && read_fd_ == write_fd_) ::shutdown(read_fd_, SHUT_RDWR);
}

void FdChannel::write_line(std::string_view line) {
  if (write_fd_ < 0) throw TransportError("channel closed for writing");
  std::string buf(line);
  if (buf.empty() || buf.back() != '\n') buf.push_back('\n');
  std::size_t sent = 0;
  while (sent < buf.size()) {
    const ssize_t n = ::write(write_fd_, buf.data() + sent, buf.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_message("write to service failed"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> FdChannel::read_line(std::chrono::milliseconds timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) throw TransportError("timed out waiting for service response");
    pollfd pfd{read_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_message("poll failed"));
    }
    if (rc == 0) throw TransportError("timed out waiting for service response");
    char chunk[65536];
    const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(errno_message("read from service failed"));
    }
    if (n == 0) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

namespace {

class SubprocessChannel final : public FdChannel {
 public:
  SubprocessChannel(int read_fd, int write_fd, pid_t pid) : FdChannel(read_fd, write_fd, true), pid_(pid) {}
  ~SubprocessChannel() override {
    shutdown_write();
    // Give the child a moment to exit on EOF, then insist.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
      ::usleep(20000);
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }

 private:
  pid_t pid_;
};

}  // namespace

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port,
                                         std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 0) {
        ::close(fd);
        last_error = "connection timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      rc = err == 0 ? 0 : -1;
      errno = err;
    }
    if (rc < 0) {
      last_error = std::strerror(errno);
      ::close(fd);
      continue;
    }
    ::fcntl(fd, F_SETFL, flags);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<FdChannel>(fd, fd, true);
  }
  throw TransportError("cannot connect to " + host + ":" + port_str + ": " + last_error);
}

std::unique_ptr<LineChannel> spawn_subprocess(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("subprocess command is empty");
  ignore_sigpipe_once();
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError(errno_message("pipe"));
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError(errno_message("pipe"));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError(errno_message("fork"));
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    std::fprintf(stderr, "exec %s failed: %s\n", args[0], std::strerror(errno));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<SubprocessChannel>(from_child[0], to_child[1], pid);
}

std::pair<std::unique_ptr<LineChannel>, std::unique_ptr<LineChannel>> loopback_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw TransportError(errno_message("socketpair"));
  }
  return {std::make_unique<FdChannel>(fds[0], fds[0], true),
          std::make_unique<FdChannel>(fds[1], fds[1], true)};
}

ServiceAddress ServiceAddress::parse(std::string_view spec) {
  ServiceAddress addr;
  if (spec.starts_with("stdio:")) {
    addr.kind = Kind::subprocess;
    std::istringstream in{std::string(spec.substr(6))};
    for (std::string word; in >> word;) addr.argv.push_back(word);
    if (addr.argv.empty()) throw ConfigError("stdio service address needs a command");
    return addr;
  }
  if (spec.starts_with("tcp://")) spec.remove_prefix(6);
  const auto colon = spec.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == spec.size()) {
    throw ConfigError("service address must be host:port or stdio:<command>, got \"" +
                      std::string(spec) + "\"");
  }
  addr.kind = Kind::tcp;
  addr.host = std::string(spec.substr(0, colon));
  try {
    std::size_t used = 0;
    addr.port = std::stoi(std::string(spec.substr(colon + 1)), &used);
    if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("invalid port in service address \"" + std::string(spec) + "\"");
  }
  if (addr.port < 1 || addr.port > 65535) throw ConfigError("service port out of range");
  return addr;
}

// --- client -----------------------------------------------------------------

namespace {

template <typename T>
T field(const Json& payload, const char* name, std::int64_t id) {
  if (!payload.is_object() || !payload.contains(name)) {
    throw ProtocolError("response " + std::to_string(id) + " lacks field '" + name + "'");
  }
  try {
    return payload.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("response " + std::to_string(id) + " has malformed field '" + name + "'");
  }
}

std::vector<Embedding> embeddings_from(const Json& payload, std::size_t count, std::size_t dim,
                                       std::int64_t id) {
  if (!payload.is_object() || !payload.contains("embeddings")) {
    throw ProtocolError("response " + std::to_string(id) + " lacks field 'embeddings'");
  }
  const Tensor t = decode_tensor(payload.at("embeddings"));
  if (t.shape.size() != 2 || t.shape[0] != count || t.shape[1] != dim) {
    throw ProtocolError("response " + std::to_string(id) + " embeddings have the wrong shape");
  }
  std::vector<Embedding> out(count, Embedding(dim));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < dim; ++k) out[i][k] = t.data[i * dim + k];
  }
  return out;
}

Tensor embedding_tensor(std::span<const double> e) {
  Tensor t;
  t.shape = {e.size()};
  t.data.assign(e.begin(), e.end());
  return t;
}

}  // namespace

ServiceBackend::ServiceBackend(std::unique_ptr<LineChannel> channel,
                               std::chrono::milliseconds timeout,
                               std::optional<std::size_t> expected_dim)
    : channel_(std::move(channel)), timeout_(timeout) {
  const Json info = call("info", Json::object());
  const std::int64_t id = last_request_id();
  dim_ = field<std::size_t>(info, "dim", id);
  model_ = field<std::string>(info, "model", id);
  if (expected_dim && *expected_dim != dim_) {
    throw ConfigError("service embedding dimension " + std::to_string(dim_) + " != expected " +
                      std::to_string(*expected_dim));
  }
}

Json ServiceBackend::call(const std::string& op, const Json& payload) {
  const std::int64_t id = next_id_++;
  channel_->write_line(serialize_frame({op, id, payload}));
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout_;
  for (;;) {
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining.count() <= 0) throw TransportError("request " + std::to_string(id) + " timed out");
    const auto line = channel_->read_line(remaining);
    if (!line) throw TransportError("service closed the connection during request " + std::to_string(id));
    Frame frame;
    try {
      frame = parse_frame(*line);
    } catch (const ProtocolError& e) {
      throw ProtocolError("malformed response to request " + std::to_string(id) + ": " + e.what());
    }
    if (frame.id < id) continue;  // answer to a request we already gave up on
    if (frame.id > id) {
      throw ProtocolError("response id " + std::to_string(frame.id) + " does not match request " +
                          std::to_string(id));
    }
    if (frame.op == "error") {
      std::string message = "service error";
      if (frame.payload.is_object() && frame.payload.contains("message") &&
          frame.payload.at("message").is_string()) {
        message = frame.payload.at("message").get<std::string>();
      }
      throw RemoteError(message);
    }
    if (frame.op != op) {
      throw ProtocolError("response " + std::to_string(id) + " has op '" + frame.op +
                          "', expected '" + op + "'");
    }
    return frame.payload;
  }
}

Json ServiceBackend::echo(const Json& payload) { return call("echo", payload); }

std::vector<Embedding> ServiceBackend::encode_text(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw ContractError("cannot encode an empty prompt");
  }
  const Json payload{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const Json response = call("encode_text", payload);
  return embeddings_from(response, texts.size(), dim_, last_request_id());
}

std::vector<Embedding> ServiceBackend::encode_images(std::span<const ImageTensor> batch) {
  validate_batch(batch);
  const Json response = call("encode_image", Json{{"batch", encode_tensor(batch_to_tensor(batch))}});
  return embeddings_from(response, batch.size(), dim_, last_request_id());
}

ScoreResult ServiceBackend::score_images(std::span<const ImageTensor> batch,
                                         const CompiledPrompts& prompts) {
  validate_batch(batch);
  Json plist = Json::array();
  for (const auto& p : prompts.prompts) {
    plist.push_back({{"text", p.text},
                     {"weight", p.weight},
                     {"negative", p.negative},
                     {"embedding", encode_tensor(embedding_tensor(p.embedding))}});
  }
  const Tensor batch_tensor = batch_to_tensor(batch);
  const Json payload{{"batch", encode_tensor(batch_tensor)},
                     {"prompts", plist},
                     {"negative_scale", prompts.negative_scale}};
  const Json response = call("score_images", payload);
  const std::int64_t id = last_request_id();

  ScoreResult result;
  result.report.loss = field<double>(response, "loss", id);
  if (!std::isfinite(result.report.loss)) {
    throw ProtocolError("response " + std::to_string(id) + " carries a non-finite loss");
  }
  result.report.loss_mean = response.contains("loss_mean")
                                ? field<double>(response, "loss_mean", id)
                                : result.report.loss / static_cast<double>(batch.size());
  if (response.contains("cosines")) {
    for (const Json& c : response.at("cosines")) {
      PromptCosine pc;
      pc.prompt = c.value("text", std::string{});
      pc.negative = c.value("negative", false);
      pc.mean_cosine = c.value("mean_cosine", 0.0);
      result.report.cosines.push_back(std::move(pc));
    }
  }
  if (!response.contains("grad")) {
    throw ProtocolError("response " + std::to_string(id) + " lacks field 'grad'");
  }
  const Tensor grad = decode_tensor(response.at("grad"));
  if (grad.shape != batch_tensor.shape) {
    throw ProtocolError("response " + std::to_string(id) + " gradient shape mismatch");
  }
  result.grad = tensor_to_batch(grad);
  return result;
}

std::unique_ptr<ServiceBackend> connect(const ServiceAddress& address, double timeout_s,
                                        std::optional<std::size_t> expected_dim) {
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
  std::unique_ptr<LineChannel> channel =
      address.kind == ServiceAddress::Kind::tcp ? connect_tcp(address.host, address.port, timeout)
                                                : spawn_subprocess(address.argv);
  return std::make_unique<ServiceBackend>(std::move(channel), timeout, expected_dim);
}

// --- server -----------------------------------------------------------------

Tensor batch_to_tensor(std::span<const ImageTensor> batch) {
  Tensor t;
  if (batch.empty()) {
    t.shape = {0, 0, 0, 3};
    return t;
  }
  const auto h = static_cast<std::size_t>(batch[0].height());
  const auto w = static_cast<std::size_t>(batch[0].width());
  t.shape = {batch.size(), h, w, 3};
  t.data.reserve(t.element_count());
  for (const ImageTensor& img : batch) {
    if (!img.same_shape(batch[0])) throw ContractError("batch images differ in shape");
    for (double v : img.data()) t.data.push_back(static_cast<float>(v));
  }
  return t;
}

std::vector<ImageTensor> tensor_to_batch(const Tensor& tensor) {
  if (tensor.shape.size() != 4 || tensor.shape[3] != 3) {
    throw ProtocolError("image batch tensor must have shape [D,H,W,3]");
  }
  const std::size_t per = tensor.shape[1] * tensor.shape[2] * 3;
  std::vector<ImageTensor> out;
  for (std::size_t d = 0; d < tensor.shape[0]; ++d) {
    ImageTensor img(static_cast<int>(tensor.shape[1]), static_cast<int>(tensor.shape[2]));
    auto dst = img.data();
    for (std::size_t i = 0; i < per; ++i) dst[i] = tensor.data[d * per + i];
    out.push_back(std::move(img));
  }
  return out;
}

namespace {

Json handle(const Frame& req, ScoringBackend& backend, const ServeOptions& options) {
  if (req.op == "info") {
    return {{"dim", backend.embedding_dim()},
            {"model", backend.model_id()},
            {"protocol_version", kProtocolVersion}};
  }
  if (req.op == "echo") {
    if (!options.enable_echo) throw ContractError("echo is only available in debug mode");
    return req.payload;
  }
  if (req.op == "encode_text") {
    const auto texts = field<std::vector<std::string>>(req.payload, "texts", req.id);
    const auto emb = backend.encode_text(texts);
    Tensor t;
    t.shape = {emb.size(), backend.embedding_dim()};
    for (const auto& e : emb) t.data.insert(t.data.end(), e.begin(), e.end());
    return {{"embeddings", encode_tensor(t)}};
  }
  if (req.op == "encode_image") {
    if (!req.payload.contains("batch")) throw ProtocolError("encode_image needs 'batch'");
    const auto batch = tensor_to_batch(decode_tensor(req.payload.at("batch")));
    const auto emb = backend.encode_images(batch);
    Tensor t;
    t.shape = {emb.size(), backend.embedding_dim()};
    for (const auto& e : emb) t.data.insert(t.data.end(), e.begin(), e.end());
    return {{"embeddings", encode_tensor(t)}};
  }
  if (req.op == "score_images") {
    if (!req.payload.contains("batch")) throw ProtocolError("score_images needs 'batch'");
    const Tensor batch_tensor = decode_tensor(req.payload.at("batch"));
    const auto batch = tensor_to_batch(batch_tensor);
    CompiledPrompts prompts;
    prompts.negative_scale = req.payload.value("negative_scale", 0.3);
    if (!req.payload.contains("prompts") || !req.payload.at("prompts").is_array()) {
      throw ProtocolError("score_images needs a 'prompts' array");
    }
    for (const Json& p : req.payload.at("prompts")) {
      CompiledPrompt cp;
      cp.text = p.value("text", std::string{});
      cp.weight = p.value("weight", 1.0);
      cp.negative = p.value("negative", false);
      if (p.contains("embedding")) {
        const Tensor e = decode_tensor(p.at("embedding"));
        cp.embedding.assign(e.data.begin(), e.data.end());
      } else {
        cp.embedding = backend.encode_text(std::vector<std::string>{cp.text}).at(0);
      }
      prompts.prompts.push_back(std::move(cp));
    }
    const ScoreResult r = backend.score_images(batch, prompts);
    Json cos = Json::array();
    for (const auto& c : r.report.cosines) {
      cos.push_back({{"text", c.prompt}, {"negative", c.negative}, {"mean_cosine", c.mean_cosine}});
    }
    return {{"loss", r.report.loss},
            {"loss_mean", r.report.loss_mean},
            {"cosines", cos},
            {"grad", encode_tensor(batch_to_tensor(r.grad))}};
  }
  throw ContractError("unknown op '" + req.op + "'");
}

}  // namespace

std::string handle_request_line(std::string_view line, ScoringBackend& backend,
                                const ServeOptions& options) {
  Frame req;
  try {
    req = parse_frame(line);
  } catch (const std::exception& e) {
    return serialize_frame({"error", 0, Json{{"message", e.what()}}});
  }
  try {
    return serialize_frame({req.op, req.id, handle(req, backend, options)});
  } catch (const std::exception& e) {
    return serialize_frame({"error", req.id, Json{{"message", e.what()}}});
  }
}

void serve(LineChannel& channel, ScoringBackend& backend, const ServeOptions& options) {
  for (;;) {
    std::optional<std::string> line;
    try {
      line = channel.read_line(std::chrono::hours(24 * 365));
    } catch (const TransportError&) {
      return;
    }
    if (!line) return;
    if (line->empty()) continue;
    try {
      channel.write_line(handle_request_line(*line, backend, options));
    } catch (const TransportError&) {
      return;
    }
  }
}

LoopbackServer::LoopbackServer(ScoringBackend& backend, ServeOptions options) {
  auto [client, server] = loopback_pair();
  client_ = std::move(client);
  server_ = std::move(server);
  thread_ = std::thread([this, &backend, options] { serve(*server_, backend, options); });
}

LoopbackServer::~LoopbackServer() {
  client_.reset();
  if (auto* fd = dynamic_cast<FdChannel*>(server_.get())) fd->shutdown_both();
  if (thread_.joinable()) thread_.join();
}

std::unique_ptr<LineChannel> LoopbackServer::take_client() {
  if (!client_) throw ContractError("loopback client already taken");
  return std::move(client_);
}

TcpListener::TcpListener(int port, const std::string& host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError(errno_message("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw ConfigError("invalid listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    const std::string msg = errno_message("cannot listen on " + host + ":" + std::to_string(port));
    ::close(fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<LineChannel> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) return std::make_unique<FdChannel>(fd, fd, true);
    if (errno != EINTR) throw TransportError(errno_message("accept"));
  }
}

}  // namespace vecdraw::protocol
