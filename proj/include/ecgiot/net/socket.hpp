#pragma once

// Thin RAII wrappers over blocking POSIX TCP sockets.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "ecgiot/error.hpp"

namespace ecgiot::net {

class NetError : public Error {
public:
    using Error::Error;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

// "host:port" or ":port". Throws ConfigError.
Endpoint parse_endpoint(const std::string& text, const std::string& field = "address");

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket();
    Socket(Socket&& other) noexcept;
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    // Throws NetError when the peer is gone.
    void send_all(std::span<const std::uint8_t> data);

    // Returns bytes read, 0 on orderly shutdown, nullopt on timeout.
    // Throws NetError on socket failure.
    std::optional<std::size_t> recv_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout);

    // Wakes any thread blocked on this socket; the fd stays owned.
    void shutdown() noexcept;
    void close() noexcept;

private:
    int fd_ = -1;
};

Socket connect_tcp(const Endpoint& endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(5));

class Listener {
public:
    // Port 0 picks an ephemeral port; see port().
    explicit Listener(const Endpoint& endpoint, int backlog = 64);

    std::uint16_t port() const { return port_; }
    std::optional<Socket> accept(std::chrono::milliseconds timeout);
    void close() noexcept { socket_.close(); }

private:
    Socket socket_;
    std::uint16_t port_ = 0;
};

}  // namespace ecgiot::net
