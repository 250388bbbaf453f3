#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/error.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace cardiodg::eval {

enum class Protocol { IntraSource, LODO };

/// "intra:<domain>", "intra:ALL" (every domain pooled) or "lodo:<target>".
struct ProtocolSpec {
    Protocol protocol = Protocol::IntraSource;
    std::string domain = "ALL"; ///< source domain (intra) or target domain (LODO)

    static ProtocolSpec parse(const std::string &s)
    {
        const auto colon = s.find(':');
        if (colon == std::string::npos || colon + 1 == s.size())
            throw Error("protocol must look like intra:DOMAIN or lodo:TARGET, got '" + s + "'");
        const std::string kind = s.substr(0, colon);
        ProtocolSpec p;
        p.domain = s.substr(colon + 1);
        if (kind == "intra")
            p.protocol = Protocol::IntraSource;
        else if (kind == "lodo")
            p.protocol = Protocol::LODO;
        else
            throw Error("unknown protocol '" + kind + "' (expected intra or lodo)");
        return p;
    }

    std::string str() const { return (protocol == Protocol::LODO ? "lodo:" : "intra:") + domain; }
    bool pooled() const { return protocol == Protocol::IntraSource && domain == "ALL"; }
};

struct SplitPlan {
    ProtocolSpec spec;
    std::vector<std::string> source_domains;
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::uint64_t seed = 42;
    double train_fraction = 0.7, val_fraction = 0.1;
};

inline void to_json(nlohmann::json &j, const SplitPlan &p)
{
    j = nlohmann::json{{"protocol", p.spec.str()}, {"source_domains", p.source_domains}, {"seed", p.seed},
                       {"train_ids", p.train_ids},  {"val_ids", p.val_ids},               {"test_ids", p.test_ids}};
}

/// Stratified ordering: records are shuffled within their class and keyed by
/// their fractional rank (j + 0.5) / n_class. Sorting by key interleaves the
/// classes so any prefix is close to proportional. Partition sizes are taken
/// in order from that sequence.
inline std::vector<std::vector<std::string>> stratified_partition(const std::vector<const ManifestEntry *> &pool,
                                                                  const std::vector<std::size_t> &sizes,
                                                                  std::mt19937_64 &rng)
{
    std::map<int, std::vector<const ManifestEntry *>> by_class;
    for (const auto *e : pool)
        by_class[static_cast<int>(e->label)].push_back(e);
    struct Keyed {
        double key;
        int cls;
        std::size_t pos;
        const ManifestEntry *e;
    };
    std::vector<Keyed> keyed;
    for (auto &[cls, members] : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = 0; j < members.size(); ++j)
            keyed.push_back({(double(j) + 0.5) / double(members.size()), cls, j, members[j]});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed &a, const Keyed &b) {
        if (a.key != b.key)
            return a.key < b.key;
        return a.cls < b.cls;
    });
    std::vector<std::vector<std::string>> parts(sizes.size());
    std::size_t at = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p)
        for (std::size_t i = 0; i < sizes[p] && at < keyed.size(); ++i)
            parts[p].push_back(keyed[at++].e->id);
    return parts;
}

inline SplitPlan make_split(const DatasetManifest &m, const ProtocolSpec &spec, std::uint64_t seed)
{
    SplitPlan plan;
    plan.spec = spec;
    plan.seed = seed;
    const auto domains = m.domains();
    std::mt19937_64 rng(derive_seed(seed, "split/" + spec.str()));

    if (spec.protocol == Protocol::IntraSource) {
        std::vector<const ManifestEntry *> pool;
        for (const auto &e : m.records)
            if (spec.pooled() || e.domain == spec.domain)
                pool.push_back(&e);
        if (pool.empty())
            throw Error("source domain '" + spec.domain + "' not present in manifest");
        if (spec.pooled())
            plan.source_domains.assign(domains.begin(), domains.end());
        else
            plan.source_domains = {spec.domain};
        const std::size_t n = pool.size();
        const std::size_t n_train = n * 7 / 10, n_val = n / 10;
        auto parts = stratified_partition(pool, {n_train, n_val, n - n_train - n_val}, rng);
        plan.train_ids = std::move(parts[0]);
        plan.val_ids = std::move(parts[1]);
        plan.test_ids = std::move(parts[2]);
        return plan;
    }

    if (!domains.count(spec.domain))
        throw Error("target domain '" + spec.domain + "' not present in manifest");
    if (domains.size() < 2)
        throw Error("leave-one-domain-out needs at least two domains");
    std::vector<const ManifestEntry *> pool;
    for (const auto &e : m.records) {
        if (e.domain == spec.domain)
            plan.test_ids.push_back(e.id);
        else
            pool.push_back(&e);
    }
    for (const auto &d : domains)
        if (d != spec.domain)
            plan.source_domains.push_back(d);
    const std::size_t n = pool.size(), n_val = n / 10;
    auto parts = stratified_partition(pool, {n_val, n - n_val}, rng);
    plan.val_ids = std::move(parts[0]);
    plan.train_ids = std::move(parts[1]);
    return plan;
}

class LeakageError : public Error {
public:
    using Error::Error;
};

/// Throws when any target-domain record id appears among `seen_ids`.
inline void assert_no_leakage(const std::vector<std::string> &seen_ids, const std::vector<std::string> &target_ids)
{
    const std::set<std::string> target(target_ids.begin(), target_ids.end());
    for (const auto &id : seen_ids)
        if (target.count(id))
            throw LeakageError("target domain leaked into training (record " + id + ")");
}

/// Checks a plan: partitions pairwise disjoint and, for LODO, no target-domain
/// record outside the test partition.
inline void validate_plan(const SplitPlan &p, const DatasetManifest &m)
{
    std::set<std::string> seen;
    for (const auto *part : {&p.train_ids, &p.val_ids, &p.test_ids})
        for (const auto &id : *part)
            if (!seen.insert(id).second)
                throw Error("split plan: record " + id + " appears in more than one partition");
    if (p.spec.protocol == Protocol::LODO) {
        std::vector<std::string> target;
        for (const auto &e : m.records)
            if (e.domain == p.spec.domain)
                target.push_back(e.id);
        std::vector<std::string> seen_ids = p.train_ids;
        seen_ids.insert(seen_ids.end(), p.val_ids.begin(), p.val_ids.end());
        assert_no_leakage(seen_ids, target);
    }
}

} // namespace cardiodg::eval
