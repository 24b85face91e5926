#include "ecgiot/net/socket.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace ecgiot::net {

namespace {

std::string errno_text(const char* what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

int poll_fd(int fd, short events, std::chrono::milliseconds timeout)
{
    pollfd p{fd, events, 0};
    while (true) {
        const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc < 0 && errno == EINTR)
            continue;
        if (rc < 0)
            throw NetError(errno_text("poll"));
        return rc == 0 ? 0 : p.revents;
    }
}

sockaddr_in resolve(const Endpoint& ep)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    const std::string host = ep.host.empty() ? "0.0.0.0" : ep.host;
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1)
        return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw NetError("cannot resolve host '" + host + "'");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

}  // namespace

Endpoint parse_endpoint(const std::string& text, const std::string& field)
{
    const auto colon = text.rfind(':');
    if (colon == std::string::npos)
        throw ConfigError(field, "expected host:port, got '" + text + "'");
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.empty())
        ep.host = "0.0.0.0";
    const auto port_text = std::string_view(text).substr(colon + 1);
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535)
        throw ConfigError(field, "invalid port in '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::send_all(std::span<const std::uint8_t> data)
{
    std::size_t sent = 0;
    while (sent < data.size()) {
        const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw NetError(errno_text("send"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<std::size_t> Socket::recv_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout)
{
    if (fd_ < 0)
        throw NetError("recv on closed socket");
    const int ev = poll_fd(fd_, POLLIN, timeout);
    if (ev == 0)
        return std::nullopt;
    while (true) {
        const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
            throw NetError(errno_text("recv"));
        return static_cast<std::size_t>(n);
    }
}

void Socket::shutdown() noexcept
{
    if (fd_ >= 0)
        ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() noexcept
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Socket connect_tcp(const Endpoint& endpoint, std::chrono::milliseconds timeout)
{
    const auto addr = resolve(endpoint);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid())
        throw NetError(errno_text("socket"));
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) {
        if (errno != EINPROGRESS)
            throw NetError(errno_text(("connect " + endpoint.to_string()).c_str()));
        if (poll_fd(s.fd(), POLLOUT, timeout) == 0)
            throw NetError("connect " + endpoint.to_string() + ": timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0)
            throw NetError("connect " + endpoint.to_string() + ": " + std::strerror(err));
    }
    ::fcntl(s.fd(), F_SETFL, flags);
    const int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

Listener::Listener(const Endpoint& endpoint, int backlog)
{
    const auto addr = resolve(endpoint);
    socket_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!socket_.valid())
        throw NetError(errno_text("socket"));
    const int one = 1;
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(socket_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0)
        throw NetError(errno_text(("bind " + endpoint.to_string()).c_str()));
    if (::listen(socket_.fd(), backlog) < 0)
        throw NetError(errno_text("listen"));
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout)
{
    if (!socket_.valid())
        return std::nullopt;
    if (poll_fd(socket_.fd(), POLLIN, timeout) == 0)
        return std::nullopt;
    const int fd = ::accept4(socket_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
        if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED)
            return std::nullopt;
        throw NetError(errno_text("accept"));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(fd);
}

}  // namespace ecgiot::net
