#include <doctest.h>

#include <array>
#include <atomic>
#include <chrono>
#include <mutex>
#include <set>
#include <thread>

#include "ecgiot/device_agent.hpp"
#include "ecgiot/ingest.hpp"
#include "ecgiot/mqtt/broker.hpp"
#include "ecgiot/mqtt/client.hpp"
#include "testing.hpp"

using namespace ecgiot;
using namespace ecgiot::mqtt;
using namespace std::chrono_literals;

namespace {

struct Inbox {
    std::mutex m;
    std::vector<std::pair<std::string, std::string>> got;

    MessageHandler handler()
    {
        return [this](const Publish& p) {
            std::lock_guard lock(m);
            got.emplace_back(p.topic, std::string(p.payload_view()));
        };
    }

    std::size_t size()
    {
        std::lock_guard lock(m);
        return got.size();
    }

    bool wait_for(std::size_t n, std::chrono::milliseconds limit = 5000ms)
    {
        const auto until = std::chrono::steady_clock::now() + limit;
        while (std::chrono::steady_clock::now() < until) {
            if (size() >= n)
                return true;
            std::this_thread::sleep_for(5ms);
        }
        return size() >= n;
    }
};

std::unique_ptr<Broker> start_broker(BrokerConfig cfg = {})
{
    cfg.listen = {"127.0.0.1", 0};
    auto b = std::make_unique<Broker>(cfg);
    b->start();
    return b;
}

ClientConfig client_cfg(const Broker& b, const std::string& id)
{
    ClientConfig c;
    c.broker = {"127.0.0.1", b.port()};
    c.client_id = id;
    c.ack_timeout = 500ms;
    c.retry_backoff = 20ms;
    return c;
}

// Reads whatever arrives until EOF or the limit; true on EOF.
bool closed_within(net::Socket& s, std::chrono::milliseconds limit)
{
    std::array<std::uint8_t, 256> buf{};
    const auto until = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < until) {
        try {
            const auto n = s.recv_some(buf, 50ms);
            if (n && *n == 0)
                return true;
        } catch (const net::NetError&) {
            return true;
        }
    }
    return false;
}

net::Socket raw_connect(const Broker& b, const std::string& id, std::uint16_t keep_alive = 60)
{
    auto s = net::connect_tcp({"127.0.0.1", b.port()});
    Connect c;
    c.client_id = id;
    c.keep_alive = keep_alive;
    s.send_all(encode_packet(c));
    std::array<std::uint8_t, 4> ack{};
    std::size_t got = 0;
    while (got < 4) {
        const auto n = s.recv_some(std::span(ack).subspan(got), 2000ms);
        REQUIRE(n);
        REQUIRE(*n > 0);
        got += *n;
    }
    CHECK(ack[0] == 0x20);
    CHECK(ack[3] == 0x00);
    return s;
}

}  // namespace

TEST_CASE("single-level wildcard subscription receives matching publishes")
{
    auto broker = start_broker();
    Inbox inbox;
    Client sub(client_cfg(*broker, "sub"));
    sub.subscribe("clinic/+/ecg/pqrst", 1, inbox.handler());
    Client pub(client_cfg(*broker, "pub"));
    pub.publish("clinic/p1/ecg/waveform", "skip", 1);
    pub.publish("clinic/p1/ecg/pqrst", "hit", 1);
    REQUIRE(inbox.wait_for(1));
    std::this_thread::sleep_for(100ms);
    CHECK(inbox.size() == 1);
    CHECK(inbox.got[0].first == "clinic/p1/ecg/pqrst");
    CHECK(inbox.got[0].second == "hit");
}

TEST_CASE("multi-level wildcard receives all four patient subtopics")
{
    auto broker = start_broker();
    Inbox inbox;
    Client sub(client_cfg(*broker, "sub"));
    sub.subscribe("clinic/p1/#", 0, inbox.handler());
    Client pub(client_cfg(*broker, "pub"));
    for (auto cls : {TopicClass::Heartbeat, TopicClass::Waveform, TopicClass::Pqrst, TopicClass::Status})
        pub.publish(make_topic("p1", cls), "x", 1);
    pub.publish("clinic/p2/heartbeat", "x", 1);
    REQUIRE(inbox.wait_for(4));
    std::this_thread::sleep_for(100ms);
    CHECK(inbox.size() == 4);
}

TEST_CASE("qos1 publish with no subscribers is acknowledged")
{
    auto broker = start_broker();
    Client pub(client_cfg(*broker, "pub"));
    pub.publish("clinic/p1/heartbeat", "{}", 1);
    CHECK(pub.inflight_count() == 0);
    CHECK(broker->published_count() == 1);
}

TEST_CASE("per-publisher order is preserved")
{
    auto broker = start_broker();
    Inbox inbox;
    Client sub(client_cfg(*broker, "sub"));
    sub.subscribe("seq/#", 1, inbox.handler());
    Client pub(client_cfg(*broker, "pub"));
    constexpr int kCount = 300;
    for (int i = 0; i < kCount; ++i)
        pub.publish("seq/a", std::to_string(i), i % 2);
    REQUIRE(inbox.wait_for(kCount));
    for (int i = 0; i < kCount; ++i)
        CHECK(inbox.got[static_cast<std::size_t>(i)].second == std::to_string(i));
}

TEST_CASE("subscriber sees overlapping filters once")
{
    auto broker = start_broker();
    Inbox inbox;
    Client sub(client_cfg(*broker, "sub"));
    sub.subscribe("clinic/#", 1, [](const Publish&) {});
    sub.subscribe("clinic/p1/heartbeat", 0, inbox.handler());
    Client pub(client_cfg(*broker, "pub"));
    pub.publish("clinic/p1/heartbeat", "x", 1);
    REQUIRE(inbox.wait_for(1));
    std::this_thread::sleep_for(100ms);
    // One delivery; both client-side routes match it, so the handler of the
    // exact filter runs once.
    CHECK(inbox.size() == 1);
}

TEST_CASE("idle connections are dropped after one and a half keep-alives")
{
    auto broker = start_broker();
    auto s = raw_connect(*broker, "idle", 1);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(closed_within(s, 4000ms));
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    CHECK(elapsed >= 1200ms);
}

TEST_CASE("pings keep a connection alive")
{
    auto broker = start_broker();
    auto s = raw_connect(*broker, "pinger", 1);
    for (int i = 0; i < 6; ++i) {
        std::this_thread::sleep_for(500ms);
        s.send_all(encode_packet(Pingreq{}));
        std::array<std::uint8_t, 2> resp{};
        const auto n = s.recv_some(resp, 1000ms);
        REQUIRE(n);
        REQUIRE(*n == 2);
        CHECK(resp[0] == 0xD0);
    }
}

TEST_CASE("a duplicate client id closes the older session")
{
    auto broker = start_broker();
    auto first = raw_connect(*broker, "same");
    auto second = raw_connect(*broker, "same");
    CHECK(closed_within(first, 2000ms));
    second.send_all(encode_packet(Pingreq{}));
    std::array<std::uint8_t, 2> resp{};
    const auto n = second.recv_some(resp, 1000ms);
    REQUIRE(n);
    CHECK(*n == 2);
}

TEST_CASE("protocol violations close the connection")
{
    auto broker = start_broker();
    SUBCASE("garbage")
    {
        auto s = raw_connect(*broker, "bad");
        s.send_all(Bytes{0x00, 0x00});
        CHECK(closed_within(s, 2000ms));
    }
    SUBCASE("oversize packet")
    {
        auto s = raw_connect(*broker, "big");
        Bytes hdr{0x30};
        const auto rl = encode_remaining_length(1024 * 1024);
        hdr.insert(hdr.end(), rl.begin(), rl.end());
        s.send_all(hdr);
        CHECK(closed_within(s, 2000ms));
    }
    SUBCASE("packet before CONNECT")
    {
        auto s = net::connect_tcp({"127.0.0.1", broker->port()});
        s.send_all(encode_packet(Pingreq{}));
        CHECK(closed_within(s, 2000ms));
    }
    SUBCASE("qos 2 publish")
    {
        auto s = raw_connect(*broker, "q2");
        s.send_all(Bytes{0x34, 0x05, 0x00, 0x01, 'a', 0x00, 0x01});
        CHECK(closed_within(s, 2000ms));
    }
}

TEST_CASE("static credentials")
{
    BrokerConfig cfg;
    cfg.username = "dev";
    cfg.password = "pw";
    auto broker = start_broker(cfg);
    auto c = client_cfg(*broker, "anon");
    Client anon(c);
    CHECK_THROWS_AS(anon.connect(), ClientError);
    c.client_id = "authed";
    c.username = "dev";
    c.password = "pw";
    Client ok(c);
    CHECK_NOTHROW(ok.connect());
    CHECK(ok.connected());
}

TEST_CASE("client resubscribes and retransmits after a dropped connection")
{
    auto broker = start_broker();
    Inbox inbox;
    Client sub(client_cfg(*broker, "sub"));
    sub.subscribe("x/#", 1, inbox.handler());
    Client pub(client_cfg(*broker, "pub"));
    pub.publish("x/1", "a", 1);
    REQUIRE(inbox.wait_for(1));
    pub.drop_connection();
    pub.publish("x/1", "b", 1);
    CHECK(pub.reconnect_count() == 1);
    REQUIRE(inbox.wait_for(2));
    sub.drop_connection();
    Client poke(client_cfg(*broker, "poke"));
    poke.publish("x/2", "reconnect me", 0);
    sub.subscribe("y", 0, [](const Publish&) {});  // reconnects, resubscribing x/#
    pub.publish("x/1", "c", 1);
    REQUIRE(inbox.wait_for(3));
    CHECK(inbox.got.back().second == "c");
}

namespace {

// Stands in for the ingestion process: owns the store it writes to and can be
// made to fail like a crashed writer.
class KillableSink final : public MessageSink {
public:
    explicit KillableSink(std::shared_ptr<store::RecordStore> s) : store_(std::move(s)), inner_(*store_) {}
    void deliver(const Message& m) override
    {
        if (dead)
            throw store::StoreError("sink is down");
        inner_.deliver(m);
    }
    std::atomic<bool> dead{false};

private:
    std::shared_ptr<store::RecordStore> store_;
    StoreSink inner_;
};

}  // namespace

TEST_CASE("qos1 through a sink that is killed and restarted loses and duplicates nothing")
{
    testing::TempDir dir;
    auto broker = start_broker();
    auto sink = std::make_shared<KillableSink>(std::make_shared<store::RecordStore>(dir.path()));
    broker->attach_sink(sink);

    auto cc = client_cfg(*broker, "device");
    cc.ack_timeout = 300ms;
    cc.retry_backoff = 30ms;
    cc.max_attempts = 60;
    Client client(cc);
    device::AgentConfig ac;
    ac.patient_id = "p1";
    ac.nonce = 99;
    device::DeviceAgent agent(ac, client);

    constexpr int kRecords = 120;
    std::atomic<int> acked{0};
    std::thread producer([&] {
        for (int i = 1; i <= kRecords; ++i) {
            agent.publish_record(PqrstRecord{i, 30, 100, 100, 100, 100, 100, "", 0});
            acked = i;
        }
    });

    while (acked < 30)
        std::this_thread::sleep_for(1ms);
    sink->dead = true;  // kill: deliveries fail, PUBACKs are withheld
    broker->detach_sink();
    std::this_thread::sleep_for(300ms);
    const int acked_at_kill = acked;
    sink.reset();
    // restart on the same directory
    sink = std::make_shared<KillableSink>(std::make_shared<store::RecordStore>(dir.path()));
    broker->attach_sink(sink);

    producer.join();
    CHECK(acked_at_kill < kRecords);
    broker->detach_sink();
    sink.reset();

    store::RecordStore reopened(dir.path());
    const auto records = reopened.pqrst_records();
    REQUIRE(records.size() == kRecords);
    for (int i = 0; i < kRecords; ++i)
        CHECK(records[static_cast<std::size_t>(i)].record_no == i + 1);
}
