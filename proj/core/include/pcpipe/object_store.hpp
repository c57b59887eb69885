#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcpipe/format.hpp"

namespace pcpipe {

// Minimal keyed blob storage: list, get, head. Objects are slice files plus
// one meta-index object.
class ObjectStore {
 public:
  virtual ~ObjectStore() = default;

  virtual std::vector<std::string> list() = 0;
  // Full object contents; throws StoreUnreachable when absent or the backend
  // cannot be reached.
  virtual Blob get(const std::string& name) = 0;
  // Object size, nullopt when absent; throws StoreUnreachable on backend
  // failure.
  virtual std::optional<std::uint64_t> head(const std::string& name) = 0;
};

class LocalDirStore : public ObjectStore {
 public:
  explicit LocalDirStore(std::filesystem::path root);

  std::vector<std::string> list() override;
  Blob get(const std::string& name) override;
  std::optional<std::uint64_t> head(const std::string& name) override;

 private:
  std::filesystem::path root_;
};

// GET /objects/<name>, HEAD /objects/<name>, GET /objects (JSON name list).
class HttpStore : public ObjectStore {
 public:
  HttpStore(std::string host, int port);

  std::vector<std::string> list() override;
  Blob get(const std::string& name) override;
  std::optional<std::uint64_t> head(const std::string& name) override;

 private:
  std::string host_;
  int port_;
};

// "http://host:port" -> HttpStore, anything else -> LocalDirStore on a path.
std::unique_ptr<ObjectStore> open_store(const std::string& url);

// Mock object-store server over a directory; serves the HttpStore wire
// protocol. port 0 binds any free port.
class StoreServer {
 public:
  StoreServer(std::filesystem::path root, const std::string& host, int port);
  ~StoreServer();
  StoreServer(const StoreServer&) = delete;
  StoreServer& operator=(const StoreServer&) = delete;

  int port() const;
  void stop();
  void wait();  // blocks until stop()

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pcpipe
