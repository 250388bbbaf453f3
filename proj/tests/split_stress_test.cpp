#include <cardiodg/eval/split.hpp>
#include <cardiodg/eval/stress.hpp>

#include <gtest/gtest.h>

namespace {

using namespace cardiodg;
using eval::ProtocolSpec;

DatasetManifest fake_manifest(const std::vector<std::string> &domains, std::size_t per_domain)
{
    DatasetManifest m;
    for (const auto &d : domains)
        for (std::size_t i = 0; i < per_domain; ++i) {
            ManifestEntry e;
            e.id = d + "-" + std::to_string(i);
            e.domain = d;
            e.label = static_cast<ArrhythmiaClass>(i % 3 == 0 ? 0 : i % 7);
            e.n_samples = 5000;
            m.records.push_back(e);
        }
    return m;
}

std::size_t count_label(const DatasetManifest &m, const std::vector<std::string> &ids, ArrhythmiaClass c)
{
    std::size_t n = 0;
    for (const auto &id : ids)
        n += m.find(id)->label == c;
    return n;
}

TEST(Split, IntraSourceCountsAndStratification)
{
    const auto m = fake_manifest({"A", "B"}, 100);
    const auto p = eval::make_split(m, ProtocolSpec::parse("intra:A"), 42);
    EXPECT_EQ(p.train_ids.size(), 70u);
    EXPECT_EQ(p.val_ids.size(), 10u);
    EXPECT_EQ(p.test_ids.size(), 20u);
    for (const auto *part : {&p.train_ids, &p.val_ids, &p.test_ids})
        for (const auto &id : *part)
            EXPECT_EQ(m.find(id)->domain, "A");
    EXPECT_NO_THROW(eval::validate_plan(p, m));
    // Interleaved strata keep each class near its 70% share; the larger the
    // class, the more it absorbs the global rounding, hence two records.
    for (int c = 0; c < 7; ++c) {
        const auto cls = static_cast<ArrhythmiaClass>(c);
        std::size_t total = 0;
        for (const auto &e : m.records)
            total += e.domain == "A" && e.label == cls;
        EXPECT_NEAR(double(count_label(m, p.train_ids, cls)), 0.7 * double(total), 2.0) << c;
    }
}

TEST(Split, PooledIntraCoversEveryDomain)
{
    const auto m = fake_manifest({"A", "B", "C"}, 50);
    const auto p = eval::make_split(m, ProtocolSpec::parse("intra:ALL"), 1);
    EXPECT_EQ(p.train_ids.size() + p.val_ids.size() + p.test_ids.size(), 150u);
    EXPECT_EQ(p.source_domains.size(), 3u);
}

TEST(Split, LodoTargetIsWholeTestSet)
{
    const auto m = fake_manifest({"ptb", "georgia", "cpsc", "chapman"}, 40);
    const auto p = eval::make_split(m, ProtocolSpec::parse("lodo:chapman"), 7);
    EXPECT_EQ(p.test_ids.size(), 40u);
    for (const auto &id : p.test_ids)
        EXPECT_EQ(m.find(id)->domain, "chapman");
    EXPECT_EQ(p.val_ids.size(), 12u);
    EXPECT_EQ(p.train_ids.size(), 108u);
    for (const auto *part : {&p.train_ids, &p.val_ids})
        for (const auto &id : *part)
            EXPECT_NE(m.find(id)->domain, "chapman");
    EXPECT_NO_THROW(eval::validate_plan(p, m));
}

TEST(Split, DeterministicUnderSeed)
{
    const auto m = fake_manifest({"A", "B"}, 60);
    const auto a = eval::make_split(m, ProtocolSpec::parse("lodo:B"), 3);
    const auto b = eval::make_split(m, ProtocolSpec::parse("lodo:B"), 3);
    const auto c = eval::make_split(m, ProtocolSpec::parse("lodo:B"), 4);
    EXPECT_EQ(a.train_ids, b.train_ids);
    EXPECT_EQ(a.val_ids, b.val_ids);
    EXPECT_NE(a.val_ids, c.val_ids);
}

TEST(Split, ErrorsForMissingDomainsAndBadProtocol)
{
    const auto one = fake_manifest({"A"}, 10);
    EXPECT_THROW(eval::make_split(one, ProtocolSpec::parse("lodo:Z"), 1), Error);
    EXPECT_THROW(eval::make_split(one, ProtocolSpec::parse("lodo:A"), 1), Error);
    EXPECT_THROW(eval::make_split(one, ProtocolSpec::parse("intra:Z"), 1), Error);
    EXPECT_THROW(ProtocolSpec::parse("cross:A"), Error);
    EXPECT_THROW(ProtocolSpec::parse("lodo:"), Error);
}

TEST(LeakageGuard, RejectsTargetIdsInTraining)
{
    const auto m = fake_manifest({"A", "B"}, 30);
    auto p = eval::make_split(m, ProtocolSpec::parse("lodo:B"), 5);
    p.train_ids.push_back(p.test_ids.front());
    p.test_ids.erase(p.test_ids.begin());
    try {
        eval::validate_plan(p, m);
        FAIL();
    } catch (const eval::LeakageError &e) {
        EXPECT_NE(std::string(e.what()).find("target domain leaked into training"), std::string::npos);
    }
    auto q = eval::make_split(m, ProtocolSpec::parse("lodo:B"), 5);
    q.val_ids.push_back(q.train_ids.front());
    EXPECT_THROW(eval::validate_plan(q, m), Error);
}

SignalMatrix random_signal(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0, 1);
    SignalMatrix m(12, 2000);
    for (float &v : m.data)
        v = g(rng);
    return m;
}

TEST(Stress, LeadDropZeroesExactlyK)
{
    for (std::size_t k : {1u, 2u, 3u}) {
        const SignalMatrix orig = random_signal(k);
        SignalMatrix m = orig;
        std::mt19937_64 rng(9);
        eval::stress_apply(m, eval::StressSpec::parse("lead-drop:" + std::to_string(k)), rng);
        std::size_t zero_rows = 0;
        for (std::size_t l = 0; l < 12; ++l) {
            const auto row = m.lead(l);
            const bool zero = std::all_of(row.begin(), row.end(), [](float v) { return v == 0.0f; });
            zero_rows += zero;
            if (!zero)
                EXPECT_TRUE(std::equal(row.begin(), row.end(), orig.lead(l).begin()));
        }
        EXPECT_EQ(zero_rows, k);
    }
}

TEST(Stress, NoiseHitsRequestedSnr)
{
    for (double snr : {5.0, 12.5, 20.0}) {
        const SignalMatrix clean = random_signal(4);
        SignalMatrix m = clean;
        std::mt19937_64 rng(1);
        eval::stress_apply(m, eval::StressSpec::parse("noise:" + std::to_string(snr)), rng);
        double pn = 0;
        for (std::size_t i = 0; i < m.data.size(); ++i) {
            const double d = double(m.data[i]) - double(clean.data[i]);
            pn += d * d;
        }
        pn /= double(m.data.size());
        EXPECT_NEAR(10 * std::log10(eval::mean_square(clean) / pn), snr, 0.5);
    }
}

TEST(Stress, SeededAndValidated)
{
    EcgRecord r;
    r.id = "rec-1";
    r.leads = random_signal(2);
    const auto spec = eval::StressSpec::parse("lead-drop:2", 11);
    EXPECT_EQ(eval::stress_apply(r, spec).leads, eval::stress_apply(r, spec).leads);
    EXPECT_THROW(eval::StressSpec::parse("lead-drop:4"), Error);
    EXPECT_THROW(eval::StressSpec::parse("noise:30"), Error);
    EXPECT_THROW(eval::StressSpec::parse("blur:3"), Error);
    EXPECT_EQ(eval::StressSpec::parse("noise:12.5").str(), "noise:12.5");
    EXPECT_EQ(eval::StressSpec::parse("none").mode, eval::StressMode::None);
}

} // namespace
