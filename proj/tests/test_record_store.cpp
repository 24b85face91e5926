#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "ecgiot/ingest.hpp"
#include "ecgiot/record_store.hpp"
#include "testing.hpp"

using namespace ecgiot;
using namespace ecgiot::store;
using nlohmann::json;

namespace {

// Manually advanced clock.
struct FakeClock {
    std::shared_ptr<std::atomic<TimestampMs>> now = std::make_shared<std::atomic<TimestampMs>>(1'760'000'000'000);
    Clock fn() const
    {
        return [n = now] { return n->load(); };
    }
    void advance(TimestampMs ms) { *now += ms; }
};

json pqrst(int record_no, const std::string& patient = "p1")
{
    return to_json(PqrstRecord{record_no, 30, 100, 98.5, 100, 100, 91.6, patient, 1'760'000'000'000});
}

json heartbeat(int bpm, const std::string& patient = "p1")
{
    return to_json(HeartbeatReading{patient, bpm, 20, 1'760'000'000'000});
}

std::filesystem::path only_log(const std::filesystem::path& dir)
{
    for (const auto& e : std::filesystem::directory_iterator(dir))
        return e.path();
    throw std::runtime_error("no log in " + dir.string());
}

}  // namespace

TEST_CASE("empty store")
{
    testing::TempDir dir;
    RecordStore s(dir.path());
    CHECK(s.size() == 0);
    CHECK(s.read_range("p1", TopicClass::Pqrst, 0, 1LL << 50).empty());
    CHECK(s.export_csv() == "Record No,Age,P,Q,R,S,T\n");
    CHECK_FALSE(s.latest("p1", TopicClass::Heartbeat));
}

TEST_CASE("append then read back verbatim, sequences consecutive")
{
    testing::TempDir dir;
    FakeClock clock;
    RecordStore s(dir.path(), clock.fn());
    const auto doc = pqrst(1);
    const auto a = s.append("clinic/p1/ecg/pqrst", "p1", doc);
    const auto b = s.append("clinic/p1/ecg/pqrst", "p1", pqrst(2));
    CHECK(b.sequence == a.sequence + 1);
    const auto t = clock.now->load();
    const auto got = s.read_range("p1", TopicClass::Pqrst, t, t + 1);
    REQUIRE(got.size() == 2);
    CHECK(got[0].payload == doc);
    CHECK(got[0].topic == "clinic/p1/ecg/pqrst");
    CHECK(got[0].received_at == t);
}

TEST_CASE("half-open time windows")
{
    testing::TempDir dir;
    FakeClock clock;
    RecordStore s(dir.path(), clock.fn());
    const auto t1 = clock.now->load();
    s.append("clinic/p1/ecg/pqrst", "p1", pqrst(1));
    clock.advance(10);
    s.append("clinic/p1/ecg/pqrst", "p1", pqrst(2));
    clock.advance(10);
    const auto t3 = clock.now->load();
    s.append("clinic/p1/ecg/pqrst", "p1", pqrst(3));

    const auto two = s.read_range("p1", TopicClass::Pqrst, t1, t3);
    REQUIRE(two.size() == 2);
    CHECK(two[0].payload["record_no"] == 1);
    CHECK(two[1].payload["record_no"] == 2);
    CHECK(s.read_range("p1", TopicClass::Pqrst, t3, t3).empty());
    CHECK(s.read_range("p1", TopicClass::Heartbeat, t1, t3 + 1).empty());
    CHECK(s.read_range("nobody", TopicClass::Pqrst, t1, t3 + 1).empty());
    CHECK_THROWS(s.read_range("p1", TopicClass::Pqrst, t3, t1));
}

TEST_CASE("duplicate message ids return the original sequence")
{
    testing::TempDir dir;
    FakeClock clock;
    RecordStore s(dir.path(), clock.fn());
    const auto a = s.append("clinic/p1/heartbeat", "p1", heartbeat(72), "m-1");
    const auto size_before = s.size();
    const auto b = s.append("clinic/p1/heartbeat", "p1", heartbeat(72), "m-1");
    CHECK(b.duplicate);
    CHECK(b.sequence == a.sequence);
    CHECK(s.size() == size_before);
    // Same id on another topic is a different message.
    CHECK_FALSE(s.append("clinic/p1/ecg/pqrst", "p1", pqrst(1), "m-1").duplicate);

    SUBCASE("survives a reopen")
    {
        RecordStore reopened(dir.path(), clock.fn());
        CHECK(reopened.append("clinic/p1/heartbeat", "p1", heartbeat(72), "m-1").duplicate);
    }
    SUBCASE("window is one day")
    {
        clock.advance(24LL * 3600 * 1000);
        CHECK_FALSE(s.append("clinic/p1/heartbeat", "p1", heartbeat(72), "m-1").duplicate);
    }
}

TEST_CASE("schema violations are rejected before anything is written")
{
    testing::TempDir dir;
    RecordStore s(dir.path());
    auto bad = pqrst(1);
    bad["p"] = 150;
    CHECK_THROWS_AS(s.append("clinic/p1/ecg/pqrst", "p1", bad), ValidationError);
    CHECK_THROWS_AS(s.append("clinic/p1/ecg/pqrst", "p1", heartbeat(72)), ValidationError);
    CHECK_THROWS_AS(s.append("clinic/p1/ecg/pqrst", "p2", pqrst(1)), ValidationError);
    CHECK_THROWS_AS(s.append("clinic/p1/ecg/pqrst", "p1", pqrst(1, "p2")), ValidationError);
    CHECK_THROWS_AS(s.append("elsewhere/p1", "p1", pqrst(1)), ValidationError);
    CHECK(s.size() == 0);
}

TEST_CASE("documents survive a reopen and sequences continue")
{
    testing::TempDir dir;
    FakeClock clock;
    std::uint64_t last = 0;
    {
        RecordStore s(dir.path(), clock.fn());
        for (int i = 1; i <= 5; ++i)
            last = s.append("clinic/p1/ecg/pqrst", "p1", pqrst(i)).sequence;
        s.append("clinic/p2/heartbeat", "p2", heartbeat(60, "p2"));
        ++last;
    }
    RecordStore s(dir.path(), clock.fn());
    CHECK(s.size() == 6);
    CHECK(s.pqrst_records().size() == 5);
    CHECK(s.append("clinic/p1/ecg/pqrst", "p1", pqrst(6)).sequence == last + 1);
    CHECK(s.patients() == std::vector<std::string>{"p1", "p2"});
    CHECK(s.latest("p2", TopicClass::Heartbeat)->payload["bpm"] == 60);
}

TEST_CASE("a torn final line is discarded on open")
{
    testing::TempDir dir;
    FakeClock clock;
    {
        RecordStore s(dir.path(), clock.fn());
        for (int i = 1; i <= 3; ++i)
            s.append("clinic/p1/ecg/pqrst", "p1", pqrst(i));
    }
    const auto log = only_log(dir.path() / "pqrst");
    const auto good_size = std::filesystem::file_size(log);

    SUBCASE("half-written line")
    {
        std::ofstream(log, std::ios::app) << R"({"patient_id":"p1","payload":{"age":3)";
    }
    SUBCASE("complete line with a bad checksum")
    {
        std::ofstream(log, std::ios::app) << R"({"seq":9,"topic":"x","crc":"00000000"})" << '\n';
    }

    RecordStore s(dir.path(), clock.fn());
    CHECK(s.size() == 3);
    CHECK(std::filesystem::file_size(log) == good_size);
    CHECK(s.append("clinic/p1/ecg/pqrst", "p1", pqrst(4)).sequence == 4);
    RecordStore again(dir.path(), clock.fn());
    CHECK(again.size() == 4);
}

TEST_CASE("corruption before the tail is an error")
{
    testing::TempDir dir;
    {
        RecordStore s(dir.path());
        for (int i = 1; i <= 3; ++i)
            s.append("clinic/p1/ecg/pqrst", "p1", pqrst(i));
    }
    const auto log = only_log(dir.path() / "pqrst");
    std::string text = testing::read_text(log);
    text[text.find("98.5")] = '7';
    std::ofstream(log, std::ios::trunc) << text;
    CHECK_THROWS_AS(RecordStore(dir.path()), CorruptStoreError);
}

TEST_CASE("line encoding")
{
    StoredDocument d{7, "clinic/p1/heartbeat", "p1", 123, heartbeat(72), "abc"};
    const auto line = encode_line(d);
    CHECK(line.find('\n') == std::string::npos);
    const auto back = decode_line(line);
    CHECK(back.sequence == 7);
    CHECK(back.payload == d.payload);
    CHECK(back.message_id == "abc");
    auto broken = line;
    broken[5] = broken[5] == '1' ? '2' : '1';
    CHECK_THROWS_AS(decode_line(broken), CorruptStoreError);
}

TEST_CASE("export: dataset row rendering and ordering by record number")
{
    testing::TempDir dir;
    RecordStore s(dir.path());
    Ingestor ingest(s);
    auto rows = testing::records().records();
    std::reverse(rows.begin(), rows.end());
    for (auto r : rows) {
        r.patient_id = "s" + std::to_string(r.record_no);
        ingest.ingest_document(make_topic(r.patient_id, TopicClass::Pqrst), to_json(r));
    }
    const auto csv = s.export_csv();
    const auto parsed = parse_csv(csv);
    REQUIRE(parsed.size() == 20);
    std::stringstream ss(csv);
    std::string line;
    for (int i = 0; i <= 5; ++i)
        std::getline(ss, line);
    CHECK(line == "5,20,78.5,100,80,100,100");

    // Re-import into a fresh store gives the same records.
    testing::TempDir dir2;
    RecordStore s2(dir2.path());
    Ingestor ingest2(s2);
    for (auto r : parsed) {
        r.patient_id = "x";
        ingest2.ingest_document(make_topic("x", TopicClass::Pqrst), to_json(r));
    }
    CHECK(parse_csv(s2.export_csv()) == parsed);
    CHECK(s.export_csv("s5") == "Record No,Age,P,Q,R,S,T\n5,20,78.5,100,80,100,100\n");
}

TEST_CASE("ingestor strips the envelope and rejects junk")
{
    testing::TempDir dir;
    RecordStore s(dir.path());
    Ingestor ingest(s);
    auto doc = heartbeat(72);
    doc["msg_id"] = "abc-1";
    const auto r = ingest.ingest("clinic/p1/heartbeat", doc.dump());
    CHECK_FALSE(r.duplicate);
    CHECK(ingest.ingest("clinic/p1/heartbeat", doc.dump()).duplicate);
    CHECK_FALSE(s.latest("p1", TopicClass::Heartbeat)->payload.contains("msg_id"));
    CHECK_THROWS_AS(ingest.ingest("clinic/p1/heartbeat", "not json"), ValidationError);
    CHECK_THROWS_AS(ingest.ingest("clinic/p1/heartbeat", "[1]"), ValidationError);
    CHECK_THROWS_AS(ingest.ingest_kind(R"({"kind":"nope","patient_id":"p1"})"), ValidationError);
}

TEST_CASE("concurrent readers see a consistent prefix")
{
    testing::TempDir dir;
    RecordStore s(dir.path());
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done) {
            const auto docs = s.read_range("p1", TopicClass::Pqrst, 0, std::numeric_limits<TimestampMs>::max());
            for (std::size_t i = 0; i < docs.size(); ++i)
                if (docs[i].payload["record_no"] != static_cast<int>(i) + 1)
                    ++bad;
        }
    });
    for (int i = 1; i <= 200; ++i)
        s.append("clinic/p1/ecg/pqrst", "p1", pqrst(i));
    done = true;
    reader.join();
    CHECK(bad == 0);
    CHECK(s.size() == 200);
}
