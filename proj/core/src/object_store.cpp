#include "pcpipe/object_store.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include "httplib.h"

namespace pcpipe {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Local directory backend

LocalDirStore::LocalDirStore(fs::path root) : root_(std::move(root)) {}

std::vector<std::string> LocalDirStore::list() {
  std::error_code ec;
  if (!fs::is_directory(root_, ec))
    fail(Errc::kStoreUnreachable, "not a directory: " + root_.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root_))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

Blob LocalDirStore::get(const std::string& name) {
  std::ifstream in(root_ / name, std::ios::binary);
  if (!in) fail(Errc::kStoreUnreachable, "object not found: " + name);
  Blob data((std::istreambuf_iterator<char>(in)),
            std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::kStoreUnreachable, "read failed: " + name);
  return data;
}

std::optional<std::uint64_t> LocalDirStore::head(const std::string& name) {
  std::error_code ec;
  const auto size = fs::file_size(root_ / name, ec);
  if (ec) return std::nullopt;
  return size;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpStore::HttpStore(std::string host, int port)
    : host_(std::move(host)), port_(port) {}

std::vector<std::string> HttpStore::list() {
  httplib::Client cli(host_, port_);
  auto res = cli.Get("/objects");
  if (!res) fail(Errc::kStoreUnreachable, "store at " + host_ + " unreachable");
  if (res->status != 200)
    fail(Errc::kStoreUnreachable, "list failed: HTTP " +
                                      std::to_string(res->status));
  std::vector<std::string> names;
  for (const auto& n : json::parse(res->body)) names.push_back(n.get<std::string>());
  return names;
}

Blob HttpStore::get(const std::string& name) {
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(30, 0);
  auto res = cli.Get("/objects/" + name);
  if (!res) fail(Errc::kStoreUnreachable, "store at " + host_ + " unreachable");
  if (res->status != 200)
    fail(Errc::kStoreUnreachable,
         "object not found: " + name + " (HTTP " +
             std::to_string(res->status) + ")");
  return Blob(res->body.begin(), res->body.end());
}

std::optional<std::uint64_t> HttpStore::head(const std::string& name) {
  httplib::Client cli(host_, port_);
  auto res = cli.Head("/objects/" + name);
  if (!res) fail(Errc::kStoreUnreachable, "store at " + host_ + " unreachable");
  if (res->status != 200) return std::nullopt;
  if (auto len = res->get_header_value("Content-Length"); !len.empty())
    return std::stoull(len);
  return std::nullopt;
}

std::unique_ptr<ObjectStore> open_store(const std::string& url) {
  if (url.rfind("http://", 0) == 0) {
    const auto rest = url.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string::npos)
      fail(Errc::kStoreUnreachable, "expected http://host:port, got " + url);
    return std::make_unique<HttpStore>(rest.substr(0, colon),
                                       std::stoi(rest.substr(colon + 1)));
  }
  return std::make_unique<LocalDirStore>(fs::path(url));
}

// ---------------------------------------------------------------------------
// Mock server

struct StoreServer::Impl {
  fs::path root;
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

StoreServer::StoreServer(fs::path root, const std::string& host, int port)
    : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  auto& sv = impl_->server;
  const fs::path base = impl_->root;

  sv.Get("/objects", [base](const httplib::Request&, httplib::Response& res) {
    json names = json::array();
    if (fs::is_directory(base))
      for (const auto& e : fs::directory_iterator(base))
        if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end(),
              [](const json& a, const json& b) {
                return a.get<std::string>() < b.get<std::string>();
              });
    res.set_content(names.dump(), "application/json");
  });
  sv.Get(R"(/objects/(.+))",
         [base](const httplib::Request& req, httplib::Response& res) {
           const fs::path p = base / req.matches[1].str();
           std::ifstream in(p, std::ios::binary);
           if (!in) {
             res.status = 404;
             return;
           }
           std::string body((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
           res.set_content(std::move(body), "application/octet-stream");
         });

  if (port == 0) {
    impl_->port = sv.bind_to_any_port(host);
  } else {
    if (!sv.bind_to_port(host, port))
      fail(Errc::kStoreUnreachable,
           "cannot bind " + host + ":" + std::to_string(port));
    impl_->port = port;
  }
  if (impl_->port < 0)
    fail(Errc::kStoreUnreachable, "cannot bind " + host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  sv.wait_until_ready();
}

StoreServer::~StoreServer() { stop(); }

int StoreServer::port() const { return impl_->port; }

void StoreServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void StoreServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace pcpipe
