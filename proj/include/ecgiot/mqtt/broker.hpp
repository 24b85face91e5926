#pragma once

// Minimal MQTT 3.1.1 broker: clean sessions only, QoS 0/1, `+`/`#` topic
// filters, no retained messages and no wills.
//
// Every PUBLISH is handed to an optional in-process MessageSink through a
// bounded queue before it is fanned out. A QoS 1 PUBLISH is acknowledged
// only after the sink has accepted it; when the sink fails or is detached
// the publisher's connection is closed without PUBACK so the client
// retransmits.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "ecgiot/mqtt/codec.hpp"
#include "ecgiot/net/socket.hpp"
#include "ecgiot/util/bounded_queue.hpp"

namespace ecgiot::mqtt {

struct Message {
    std::string topic;
    Bytes payload;
    std::uint8_t qos = 0;
    bool dup = false;
    std::string client_id;
    std::uint16_t packet_id = 0;

    std::string_view payload_view() const
    {
        return {reinterpret_cast<const char*>(payload.data()), payload.size()};
    }
};

class MessageSink {
public:
    virtual ~MessageSink() = default;
    // Must be durable on return. Any exception withholds the PUBACK.
    virtual void deliver(const Message& message) = 0;
};

struct BrokerConfig {
    net::Endpoint listen{"127.0.0.1", 1883};
    std::optional<std::string> username;  // static credentials; off when unset
    std::optional<std::string> password;
    std::size_t max_packet_size = kDefaultMaxPacketSize;
    std::size_t sink_queue_capacity = 1024;
    std::chrono::milliseconds connect_timeout{10'000};
    // With a required sink, QoS 1 publishes are refused while none is
    // attached. Attaching a sink turns this on.
    bool require_sink = false;
};

class Broker {
public:
    explicit Broker(BrokerConfig config);
    ~Broker();
    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    void start();
    void stop();

    std::uint16_t port() const { return port_; }

    void attach_sink(std::shared_ptr<MessageSink> sink);
    void detach_sink();

    std::size_t connection_count() const;
    std::uint64_t published_count() const { return published_.load(); }

private:
    struct Connection;
    struct SinkJob;

    void accept_loop();
    void sink_loop();
    void serve(const std::shared_ptr<Connection>& conn);
    void handle(const std::shared_ptr<Connection>& conn, Packet&& packet);
    void handle_connect(const std::shared_ptr<Connection>& conn, Connect&& c);
    void handle_publish(const std::shared_ptr<Connection>& conn, Publish&& p);
    void handle_subscribe(const std::shared_ptr<Connection>& conn, Subscribe&& s);
    bool hand_to_sink(Message message, bool wait);
    void fan_out(const Message& message);
    void drop(const std::shared_ptr<Connection>& conn);
    void reap_finished();

    BrokerConfig config_;
    std::optional<net::Listener> listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::thread sink_worker_;

    mutable std::mutex connections_mutex_;
    std::vector<std::shared_ptr<Connection>> connections_;
    std::unordered_map<std::string, std::weak_ptr<Connection>> by_client_id_;
    std::uint64_t auto_id_ = 0;

    struct SubscriptionEntry {
        std::string filter;
        std::uint8_t qos;
        std::weak_ptr<Connection> conn;
    };
    mutable std::shared_mutex subscriptions_mutex_;
    std::vector<SubscriptionEntry> subscriptions_;

    std::mutex sink_mutex_;
    std::shared_ptr<MessageSink> sink_;
    bool sink_required_ = false;
    std::unique_ptr<util::BoundedQueue<std::shared_ptr<SinkJob>>> sink_queue_;

    std::atomic<std::uint64_t> published_{0};
};

}  // namespace ecgiot::mqtt
