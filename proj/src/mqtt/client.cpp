#include "ecgiot/mqtt/client.hpp"

#include <array>

#include <spdlog/spdlog.h>

#include "ecgiot/timeutil.hpp"

namespace ecgiot::mqtt {

using namespace std::chrono_literals;

Client::Client(ClientConfig config) : config_(std::move(config)) {}

Client::~Client()
{
    stopping_ = true;
    try {
        disconnect();
    } catch (...) {
    }
}

std::size_t Client::inflight_count() const
{
    std::lock_guard lock(state_mutex_);
    return inflight_.size();
}

void Client::send(const Packet& p)
{
    const auto bytes = encode_packet(p);
    std::lock_guard lock(write_mutex_);
    socket_.send_all(bytes);
    last_send_ms_ = system_now_ms();
}

std::uint16_t Client::next_packet_id()
{
    std::lock_guard lock(state_mutex_);
    do {
        if (++last_packet_id_ == 0)
            last_packet_id_ = 1;
    } while (inflight_.contains(last_packet_id_) || pending_subacks_.contains(last_packet_id_));
    return last_packet_id_;
}

void Client::open_session()
{
    socket_ = net::connect_tcp(config_.broker, config_.ack_timeout);
    send(Connect{config_.client_id, config_.keep_alive, true, config_.username, config_.password});

    std::vector<std::uint8_t> buffer;
    std::array<std::uint8_t, 512> chunk{};
    const auto deadline = std::chrono::steady_clock::now() + config_.ack_timeout;
    std::optional<Decoded> decoded;
    while (!decoded) {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining <= 0ms)
            throw net::NetError("timed out waiting for CONNACK");
        const auto n = socket_.recv_some(chunk, remaining);
        if (n && *n == 0)
            throw net::NetError("broker closed the connection during CONNECT");
        if (n)
            buffer.insert(buffer.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(*n));
        decoded = decode_packet(buffer);
    }
    const auto* ack = std::get_if<Connack>(&decoded->packet);
    if (!ack)
        throw ClientError("broker answered CONNECT with a non-CONNACK packet");
    if (ack->code != ConnackCode::Accepted)
        throw ClientError("broker refused the connection (code " + std::to_string(int(ack->code)) + ")");

    connected_ = true;
    ever_connected_ = true;
    reader_ = std::thread([this] { reader_loop(); });

    std::vector<Subscription> subs;
    std::vector<Publish> resend;
    {
        std::lock_guard lock(state_mutex_);
        for (const auto& r : routes_)
            subs.push_back({r.filter, r.qos});
        for (const auto& [_, p] : inflight_)
            resend.push_back(p);
    }
    if (!subs.empty())
        send_subscribe(subs);
    for (auto& p : resend) {
        p.dup = true;
        send(p);
    }
}

void Client::teardown()
{
    connected_ = false;
    socket_.shutdown();
    if (reader_.joinable())
        reader_.join();
    socket_.close();
    state_cv_.notify_all();
}

void Client::connect()
{
    std::lock_guard lock(publish_mutex_);
    if (connected_)
        return;
    teardown();
    open_session();
}

void Client::disconnect()
{
    std::lock_guard lock(publish_mutex_);
    if (connected_) {
        try {
            send(Disconnect{});
        } catch (const net::NetError&) {
        }
    }
    teardown();
}

void Client::drop_connection()
{
    teardown();
}

void Client::reconnect()
{
    teardown();
    for (int attempt = 1;; ++attempt) {
        try {
            open_session();
            ++reconnects_;
            return;
        } catch (const std::exception& e) {
            teardown();
            if (attempt >= config_.max_attempts || stopping_)
                throw ClientError(std::string("cannot reach broker: ") + e.what());
            spdlog::debug("reconnect attempt {} failed: {}", attempt, e.what());
            std::this_thread::sleep_for(config_.retry_backoff * std::min(attempt, 10));
        }
    }
}

void Client::ensure_connected()
{
    if (connected_)
        return;
    if (!ever_connected_) {
        teardown();
        open_session();
        return;
    }
    reconnect();
}

void Client::publish(const std::string& topic, const std::string& payload, int qos)
{
    Publish p;
    p.topic = topic;
    p.payload.assign(payload.begin(), payload.end());
    p.qos = static_cast<std::uint8_t>(qos);
    publish(std::move(p));
}

void Client::publish(Publish p)
{
    if (p.qos > 1)
        throw ClientError("QoS 2 is not supported");
    if (!is_valid_topic_name(p.topic))
        throw ClientError("invalid topic '" + p.topic + "'");
    std::lock_guard guard(publish_mutex_);

    if (p.qos == 0) {
        p.packet_id = 0;
        p.dup = false;
        ensure_connected();
        try {
            send(p);
        } catch (const net::NetError&) {
            reconnect();
            send(p);
        }
        return;
    }

    ensure_connected();
    p.dup = false;
    p.packet_id = next_packet_id();
    const auto id = p.packet_id;
    {
        std::lock_guard lock(state_mutex_);
        inflight_[id] = p;
    }
    try {
        send(p);
    } catch (const net::NetError&) {
        connected_ = false;
    }

    for (int attempt = 1;; ++attempt) {
        {
            std::unique_lock lock(state_mutex_);
            state_cv_.wait_for(lock, config_.ack_timeout, [&] { return !inflight_.contains(id) || !connected_; });
            if (!inflight_.contains(id))
                return;
        }
        if (attempt >= config_.max_attempts) {
            std::lock_guard lock(state_mutex_);
            inflight_.erase(id);
            throw ClientError("no PUBACK for packet " + std::to_string(id) + " on '" + p.topic + "'");
        }
        std::this_thread::sleep_for(config_.retry_backoff * std::min(attempt, 10));
        try {
            reconnect();  // retransmits inflight messages with DUP
        } catch (...) {
            std::lock_guard lock(state_mutex_);
            inflight_.erase(id);
            throw;
        }
    }
}

void Client::subscribe(const std::string& filter, int qos, MessageHandler handler)
{
    if (!is_valid_topic_filter(filter))
        throw ClientError("invalid topic filter '" + filter + "'");
    std::lock_guard guard(publish_mutex_);
    {
        std::lock_guard lock(state_mutex_);
        routes_.push_back({filter, static_cast<std::uint8_t>(qos), std::move(handler)});
    }
    if (!connected_) {
        ensure_connected();  // subscribes every route
        return;
    }
    send_subscribe({{filter, static_cast<std::uint8_t>(qos)}});
}

void Client::send_subscribe(const std::vector<Subscription>& subs)
{
    const auto id = next_packet_id();
    {
        std::lock_guard lock(state_mutex_);
        pending_subacks_[id] = std::nullopt;
    }
    send(Subscribe{id, subs});
    std::unique_lock lock(state_mutex_);
    state_cv_.wait_for(lock, config_.ack_timeout, [&] { return pending_subacks_[id].has_value() || !connected_; });
    auto ack = pending_subacks_[id];
    pending_subacks_.erase(id);
    if (!ack)
        throw net::NetError("no SUBACK received");
    for (auto rc : ack->return_codes)
        if (rc == kSubackFailure)
            throw ClientError("broker rejected a subscription");
}

void Client::reader_loop()
{
    std::vector<std::uint8_t> buffer;
    std::array<std::uint8_t, 16 * 1024> chunk{};
    try {
        while (connected_ && !stopping_) {
            if (config_.keep_alive > 0 &&
                system_now_ms() - last_send_ms_.load() > static_cast<std::int64_t>(config_.keep_alive) * 500)
                send(Pingreq{});
            const auto n = socket_.recv_some(chunk, 100ms);
            if (!n)
                continue;
            if (*n == 0)
                break;
            buffer.insert(buffer.end(), chunk.begin(), chunk.begin() + static_cast<std::ptrdiff_t>(*n));
            std::size_t offset = 0;
            while (auto decoded = decode_packet(std::span(buffer).subspan(offset))) {
                offset += decoded->consumed;
                on_packet(std::move(decoded->packet));
            }
            buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(offset));
        }
    } catch (const std::exception& e) {
        spdlog::debug("client '{}' reader stopped: {}", config_.client_id, e.what());
    }
    connected_ = false;
    state_cv_.notify_all();
}

void Client::on_packet(Packet&& packet)
{
    if (auto* ack = std::get_if<Puback>(&packet)) {
        std::lock_guard lock(state_mutex_);
        inflight_.erase(ack->packet_id);
        state_cv_.notify_all();
    } else if (auto* sub = std::get_if<Suback>(&packet)) {
        std::lock_guard lock(state_mutex_);
        if (auto it = pending_subacks_.find(sub->packet_id); it != pending_subacks_.end())
            it->second = *sub;
        state_cv_.notify_all();
    } else if (auto* pub = std::get_if<Publish>(&packet)) {
        std::vector<MessageHandler> handlers;
        {
            std::lock_guard lock(state_mutex_);
            for (const auto& r : routes_)
                if (topic_matches(r.filter, pub->topic))
                    handlers.push_back(r.handler);
        }
        for (auto& h : handlers)
            h(*pub);
        if (pub->qos == 1)
            send(Puback{pub->packet_id});
    }
}

}  // namespace ecgiot::mqtt
