#pragma once

// Blocking MQTT 3.1.1 client with a background reader thread.
//
// QoS 1 publishes wait for PUBACK. On timeout or connection loss the client
// reconnects and retransmits every unacknowledged message with DUP set, so
// delivery is at-least-once.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ecgiot/mqtt/codec.hpp"
#include "ecgiot/net/socket.hpp"
#include "ecgiot/publisher.hpp"

namespace ecgiot::mqtt {

class ClientError : public Error {
public:
    using Error::Error;
};

struct ClientConfig {
    net::Endpoint broker{"127.0.0.1", 1883};
    std::string client_id;
    std::uint16_t keep_alive = 30;
    std::optional<std::string> username;
    std::optional<std::string> password;
    std::chrono::milliseconds ack_timeout{3000};
    int max_attempts = 20;  // connect/retransmit attempts per publish
    std::chrono::milliseconds retry_backoff{100};
};

using MessageHandler = std::function<void(const Publish&)>;

class Client final : public Publisher {
public:
    explicit Client(ClientConfig config);
    ~Client() override;
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    // Throws ClientError when the broker refuses the session.
    void connect();
    void disconnect();
    bool connected() const { return connected_.load(); }

    void publish(const std::string& topic, const std::string& payload, int qos) override;
    void publish(Publish packet);

    // Registers the handler and subscribes; survives reconnects.
    void subscribe(const std::string& filter, int qos, MessageHandler handler);

    // Closes the TCP connection without DISCONNECT, as a crash would.
    void drop_connection();

    std::uint64_t reconnect_count() const { return reconnects_.load(); }
    std::size_t inflight_count() const;

private:
    struct Route {
        std::string filter;
        std::uint8_t qos;
        MessageHandler handler;
    };

    void open_session();
    void teardown();
    void ensure_connected();
    void reconnect();
    void send(const Packet& p);
    void reader_loop();
    void on_packet(Packet&& p);
    std::uint16_t next_packet_id();
    void send_subscribe(const std::vector<Subscription>& subs);

    ClientConfig config_;
    net::Socket socket_;
    std::thread reader_;
    std::atomic<bool> connected_{false};
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> reconnects_{0};
    bool ever_connected_ = false;

    std::mutex write_mutex_;
    std::atomic<std::int64_t> last_send_ms_{0};

    std::mutex publish_mutex_;  // serializes publish/subscribe callers

    mutable std::mutex state_mutex_;
    std::condition_variable state_cv_;
    std::map<std::uint16_t, Publish> inflight_;
    std::map<std::uint16_t, std::optional<Suback>> pending_subacks_;
    std::vector<Route> routes_;
    std::uint16_t last_packet_id_ = 0;
};

}  // namespace ecgiot::mqtt
