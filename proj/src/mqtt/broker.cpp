#include "ecgiot/mqtt/broker.hpp"

#include <algorithm>
#include <array>
#include <future>
#include <map>

#include <spdlog/spdlog.h>

namespace ecgiot::mqtt {

using namespace std::chrono_literals;
using SteadyClock = std::chrono::steady_clock;

struct Broker::Connection {
    explicit Connection(net::Socket s) : socket(std::move(s)) {}

    void send(const Packet& p)
    {
        const auto bytes = encode_packet(p);
        std::lock_guard lock(write_mutex);
        socket.send_all(bytes);
    }

    std::uint16_t allocate_packet_id()
    {
        std::lock_guard lock(write_mutex);
        if (++next_packet_id == 0)
            next_packet_id = 1;
        return next_packet_id;
    }

    void close() noexcept
    {
        closing = true;
        socket.shutdown();
    }

    net::Socket socket;
    std::mutex write_mutex;
    std::uint16_t next_packet_id = 0;
    std::string client_id;  // written once by the serving thread before registration
    bool connected = false;
    std::chrono::milliseconds keep_alive{0};
    std::atomic<bool> closing{false};
    std::atomic<bool> finished{false};
    std::thread thread;
};

struct Broker::SinkJob {
    Message message;
    bool wait = false;
    std::promise<bool> done;
};

namespace {

class ProtocolViolation : public Error {
public:
    using Error::Error;
};

}  // namespace

Broker::Broker(BrokerConfig config) : config_(std::move(config)), sink_required_(config_.require_sink) {}

Broker::~Broker()
{
    stop();
}

void Broker::start()
{
    if (running_)
        return;
    listener_.emplace(config_.listen);
    port_ = listener_->port();
    sink_queue_ = std::make_unique<util::BoundedQueue<std::shared_ptr<SinkJob>>>(config_.sink_queue_capacity);
    running_ = true;
    sink_worker_ = std::thread([this] { sink_loop(); });
    acceptor_ = std::thread([this] { accept_loop(); });
    spdlog::info("mqtt broker listening on {}:{}", config_.listen.host, port_);
}

void Broker::stop()
{
    if (!running_.exchange(false))
        return;
    if (acceptor_.joinable())
        acceptor_.join();
    listener_.reset();

    std::vector<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lock(connections_mutex_);
        conns.swap(connections_);
        by_client_id_.clear();
    }
    for (auto& c : conns)
        c->close();
    for (auto& c : conns)
        if (c->thread.joinable())
            c->thread.join();

    sink_queue_->close();
    if (sink_worker_.joinable())
        sink_worker_.join();
    {
        std::unique_lock lock(subscriptions_mutex_);
        subscriptions_.clear();
    }
}

void Broker::attach_sink(std::shared_ptr<MessageSink> sink)
{
    std::lock_guard lock(sink_mutex_);
    sink_ = std::move(sink);
    sink_required_ = true;
}

void Broker::detach_sink()
{
    std::lock_guard lock(sink_mutex_);
    sink_.reset();
}

std::size_t Broker::connection_count() const
{
    std::lock_guard lock(connections_mutex_);
    return static_cast<std::size_t>(std::count_if(connections_.begin(), connections_.end(),
                                                  [](const auto& c) { return !c->finished.load(); }));
}

void Broker::accept_loop()
{
    while (running_) {
        std::optional<net::Socket> sock;
        try {
            sock = listener_->accept(200ms);
        } catch (const net::NetError& e) {
            spdlog::warn("accept failed: {}", e.what());
            continue;
        }
        reap_finished();
        if (!sock)
            continue;
        auto conn = std::make_shared<Connection>(std::move(*sock));
        std::lock_guard lock(connections_mutex_);
        connections_.push_back(conn);
        conn->thread = std::thread([this, conn] { serve(conn); });
    }
}

void Broker::reap_finished()
{
    std::vector<std::shared_ptr<Connection>> done;
    {
        std::lock_guard lock(connections_mutex_);
        auto it = std::stable_partition(connections_.begin(), connections_.end(),
                                        [](const auto& c) { return !c->finished.load(); });
        done.assign(std::make_move_iterator(it), std::make_move_iterator(connections_.end()));
        connections_.erase(it, connections_.end());
    }
    for (auto& c : done)
        if (c->thread.joinable())
            c->thread.join();
}

void Broker::sink_loop()
{
    while (auto job = sink_queue_->pop()) {
        std::shared_ptr<MessageSink> sink;
        bool required;
        {
            std::lock_guard lock(sink_mutex_);
            sink = sink_;
            required = sink_required_;
        }
        bool ok = !required;
        if (sink) {
            try {
                sink->deliver((*job)->message);
                ok = true;
            } catch (const std::exception& e) {
                spdlog::warn("sink rejected message on '{}': {}", (*job)->message.topic, e.what());
                ok = false;
            }
        }
        if ((*job)->wait)
            (*job)->done.set_value(ok);
    }
}

bool Broker::hand_to_sink(Message message, bool wait)
{
    auto job = std::make_shared<SinkJob>();
    job->message = std::move(message);
    job->wait = wait;
    auto done = job->done.get_future();
    if (!sink_queue_->push(std::move(job)))
        return false;
    return wait ? done.get() : true;
}

void Broker::serve(const std::shared_ptr<Connection>& conn)
{
    std::vector<std::uint8_t> buffer;
    std::array<std::uint8_t, 16 * 1024> chunk{};
    auto last_activity = SteadyClock::now();
    try {
        while (running_ && !conn->closing) {
            // 1.5 x keep-alive once connected; zero keep-alive disables the check.
            const auto deadline = conn->connected ? conn->keep_alive * 3 / 2 : config_.connect_timeout;
            if (deadline.count() > 0 && SteadyClock::now() - last_activity > deadline) {
                spdlog::info("closing idle connection '{}'", conn->client_id);
                break;
            }
            const auto n = conn->socket.recv_some(chunk, 100ms);
            if (!n)
                continue;
            if (*n == 0)
                break;
            last_activity = SteadyClock::now();
            buffer.insert(buffer.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(*n));
            std::size_t offset = 0;
            while (!conn->closing) {
                auto decoded = decode_packet(std::span(buffer).subspan(offset), config_.max_packet_size);
                if (!decoded)
                    break;
                offset += decoded->consumed;
                handle(conn, std::move(decoded->packet));
            }
            buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(offset));
        }
    } catch (const ProtocolError& e) {
        spdlog::warn("protocol error from '{}': {}", conn->client_id, e.what());
    } catch (const ProtocolViolation& e) {
        spdlog::warn("protocol violation from '{}': {}", conn->client_id, e.what());
    } catch (const net::NetError& e) {
        spdlog::debug("connection '{}' lost: {}", conn->client_id, e.what());
    } catch (const std::exception& e) {
        spdlog::error("connection '{}' failed: {}", conn->client_id, e.what());
    }
    drop(conn);
    conn->finished = true;
}

void Broker::handle(const std::shared_ptr<Connection>& conn, Packet&& packet)
{
    if (!conn->connected && !std::holds_alternative<Connect>(packet))
        throw ProtocolViolation("first packet must be CONNECT");
    std::visit(
        [&](auto&& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Connect>) {
                if (conn->connected)
                    throw ProtocolViolation("second CONNECT on one connection");
                handle_connect(conn, std::move(p));
            } else if constexpr (std::is_same_v<T, Publish>) {
                handle_publish(conn, std::move(p));
            } else if constexpr (std::is_same_v<T, Subscribe>) {
                handle_subscribe(conn, std::move(p));
            } else if constexpr (std::is_same_v<T, Puback>) {
                // Outbound QoS 1 deliveries are not retried; the ack needs no bookkeeping.
            } else if constexpr (std::is_same_v<T, Pingreq>) {
                conn->send(Pingresp{});
            } else if constexpr (std::is_same_v<T, Disconnect>) {
                conn->close();
            } else {
                throw ProtocolViolation(std::string("clients may not send ") + packet_type_name(packet_type(Packet{p})));
            }
        },
        std::move(packet));
}

void Broker::handle_connect(const std::shared_ptr<Connection>& conn, Connect&& c)
{
    if (config_.username) {
        const bool ok = c.username == config_.username && (!config_.password || c.password == config_.password);
        if (!ok) {
            conn->send(Connack{false, ConnackCode::BadCredentials});
            conn->close();
            return;
        }
    }
    if (c.client_id.empty() && !c.clean_session) {
        conn->send(Connack{false, ConnackCode::IdentifierRejected});
        conn->close();
        return;
    }

    std::shared_ptr<Connection> previous;
    {
        std::lock_guard lock(connections_mutex_);
        if (c.client_id.empty())
            c.client_id = "auto-" + std::to_string(++auto_id_);
        conn->client_id = c.client_id;
        auto& slot = by_client_id_[c.client_id];
        previous = slot.lock();
        slot = conn;
    }
    if (previous && previous != conn) {
        spdlog::info("client id '{}' reconnected; closing the older session", c.client_id);
        {
            std::unique_lock lock(subscriptions_mutex_);
            std::erase_if(subscriptions_, [&](const SubscriptionEntry& e) { return e.conn.lock() == previous; });
        }
        previous->close();
    }
    conn->keep_alive = std::chrono::seconds(c.keep_alive);
    conn->connected = true;
    conn->send(Connack{false, ConnackCode::Accepted});
}

void Broker::handle_publish(const std::shared_ptr<Connection>& conn, Publish&& p)
{
    Message m{std::move(p.topic), std::move(p.payload), p.qos, p.dup, conn->client_id, p.packet_id};
    if (m.qos == 1) {
        if (!hand_to_sink(m, true)) {
            // No PUBACK: the client keeps the message and retransmits after reconnecting.
            spdlog::warn("sink unavailable; dropping connection '{}' without PUBACK", conn->client_id);
            conn->close();
            return;
        }
        fan_out(m);
        ++published_;
        conn->send(Puback{m.packet_id});
    } else {
        hand_to_sink(m, false);
        fan_out(m);
        ++published_;
    }
}

void Broker::handle_subscribe(const std::shared_ptr<Connection>& conn, Subscribe&& s)
{
    Suback ack{s.packet_id, {}};
    {
        std::unique_lock lock(subscriptions_mutex_);
        for (auto& sub : s.subscriptions) {
            const auto granted = static_cast<std::uint8_t>(std::min<int>(sub.qos, 1));
            auto existing = std::find_if(subscriptions_.begin(), subscriptions_.end(), [&](const SubscriptionEntry& e) {
                return e.filter == sub.filter && e.conn.lock() == conn;
            });
            if (existing != subscriptions_.end())
                existing->qos = granted;
            else
                subscriptions_.push_back({sub.filter, granted, conn});
            ack.return_codes.push_back(granted);
        }
    }
    conn->send(ack);
}

void Broker::fan_out(const Message& message)
{
    std::map<Connection*, std::pair<std::shared_ptr<Connection>, std::uint8_t>> targets;
    {
        std::shared_lock lock(subscriptions_mutex_);
        for (const auto& e : subscriptions_) {
            if (!topic_matches(e.filter, message.topic))
                continue;
            auto c = e.conn.lock();
            if (!c || c->closing)
                continue;
            auto& slot = targets[c.get()];
            slot.first = c;
            slot.second = std::max(slot.second, e.qos);
        }
    }
    for (auto& [_, target] : targets) {
        auto& [conn, sub_qos] = target;
        Publish out;
        out.topic = message.topic;
        out.payload = message.payload;
        out.qos = std::min(message.qos, sub_qos);
        if (out.qos > 0)
            out.packet_id = conn->allocate_packet_id();
        try {
            conn->send(out);
        } catch (const net::NetError&) {
            conn->close();
        }
    }
}

void Broker::drop(const std::shared_ptr<Connection>& conn)
{
    conn->close();
    {
        std::unique_lock lock(subscriptions_mutex_);
        std::erase_if(subscriptions_, [&](const SubscriptionEntry& e) {
            auto c = e.conn.lock();
            return !c || c == conn;
        });
    }
    std::lock_guard lock(connections_mutex_);
    if (auto it = by_client_id_.find(conn->client_id); it != by_client_id_.end() && it->second.lock() == conn)
        by_client_id_.erase(it);
}

}  // namespace ecgiot::mqtt
