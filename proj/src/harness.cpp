#include "chorchain/harness.hpp"

#include "chorchain/dump.hpp"
#include "chorchain/provider.hpp"
#include "chorchain/rng.hpp"
#include "chorchain/trace.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chorchain {

// Variants ------------------------------------------------------------------------------

Variant Variant::parse(std::string_view choices, const ProcessModel& model)
{
    Variant v;
    v.name = std::string(choices);
    if (choices.empty() || choices == "first")
        return v;
    if (choices == "last") {
        v.fallback_ = Default::Last;
        return v;
    }
    std::string text(choices);
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("variant item '" + item + "' is not <xor node>=<branch>");
        const std::string id = item.substr(0, eq);
        const auto& nodes = model.nodes();
        auto it = std::find_if(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
        if (it == nodes.end() || it->kind != NodeKind::XorSplit)
            throw std::invalid_argument("'" + id + "' is not an XOR split of model " + std::to_string(model.model_id()));
        const auto node = static_cast<std::size_t>(it - nodes.begin());
        const std::size_t branch = std::stoul(item.substr(eq + 1));
        if (branch >= model.out_edges(node).size())
            throw std::invalid_argument("XOR split '" + id + "' has no branch " + std::to_string(branch));
        v.choice[node] = branch;
    }
    return v;
}

std::size_t Variant::branch_for(std::size_t node, std::size_t branches) const
{
    if (auto it = choice.find(node); it != choice.end())
        return it->second;
    return fallback_ == Default::Last ? branches - 1 : 0;
}

// Plans ---------------------------------------------------------------------------------

std::string_view to_string(PlanStep::Kind kind)
{
    switch (kind) {
    case PlanStep::Kind::Start: return "start";
    case PlanStep::Kind::Handover: return "handover";
    case PlanStep::Kind::Split: return "split";
    case PlanStep::Kind::Join: return "join";
    case PlanStep::Kind::End: return "end";
    }
    return "?";
}

std::size_t Plan::handover_count() const
{
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const PlanStep& s) {
        return s.kind == PlanStep::Kind::Handover;
    }));
}

std::size_t Plan::tx_count() const { return steps.empty() ? 0 : steps.size() - 1; }

std::vector<std::string> Plan::participants() const
{
    std::set<std::string> names{"owner"};
    for (const auto& s : steps) {
        names.insert(s.actor);
        if (!s.receiver.empty())
            names.insert(s.receiver);
    }
    return {names.begin(), names.end()};
}

namespace {

class PlanCompiler {
public:
    PlanCompiler(const ProcessModel& model, const Variant& variant) : model_(model), variant_(variant) {}

    Plan compile()
    {
        PlanStep start;
        start.kind = PlanStep::Kind::Start;
        start.actor = "owner";
        start.lineage = "0";
        add(start);
        Cursor c = sequence(model_.structure(), {{0, 0}, "owner", "0"}, true);
        if (c.holder != "owner")
            c = handover(c, "owner", kFillerTaskId, std::nullopt);
        PlanStep end;
        end.kind = PlanStep::Kind::End;
        end.inputs = {c.token};
        end.actor = "owner";
        end.lineage = c.lineage;
        add(end);
        return std::move(plan_);
    }

private:
    struct Cursor {
        TokenRef token;
        std::string holder;
        std::string lineage;
    };

    std::size_t add(PlanStep s)
    {
        plan_.steps.push_back(std::move(s));
        return plan_.steps.size() - 1;
    }

    Cursor handover(const Cursor& c, const std::string& to, TaskId task, std::optional<TaskId> runs)
    {
        PlanStep s;
        s.kind = PlanStep::Kind::Handover;
        s.inputs = {c.token};
        s.actor = c.holder;
        s.receiver = to;
        s.task = task;
        s.runs_task = runs;
        s.lineage = c.lineage;
        return {{add(std::move(s)), 0}, to, c.lineage};
    }

    Cursor block(const Block& b, const Cursor& c)
    {
        if (b.kind == Block::Kind::Seq)
            return sequence(b, c, false);
        Block wrapper;
        wrapper.kind = Block::Kind::Seq;
        wrapper.children = {b};
        return sequence(wrapper, c, false);
    }

    [[noreturn]] void unsupported(const Block& b, const std::string& why) const
    {
        throw ModelError(ModelError::Kind::Structure, model_.nodes().at(b.node).id, why);
    }

    Cursor sequence(const Block& seq, Cursor c, bool root)
    {
        const auto& ch = seq.children;
        for (std::size_t i = 0; i < ch.size(); ++i) {
            const Block& b = ch[i];
            switch (b.kind) {
            case Block::Kind::Task: c = handover(c, participant_for(b.task), b.task, b.task); break;
            case Block::Kind::Seq: c = sequence(b, c, false); break;
            case Block::Kind::Xor: c = block(b.children.at(variant_.branch_for(b.node, b.children.size())), c); break;
            case Block::Kind::And: {
                const bool last = i + 1 == ch.size();
                if (last && !root)
                    unsupported(b, "an AND block may not close a branch; the harness needs a task after each join");
                if (!last && ch[i + 1].kind != Block::Kind::Task)
                    unsupported(b, "the harness needs a task directly after an AND join");

                PlanStep split;
                split.kind = PlanStep::Kind::Split;
                split.inputs = {c.token};
                split.actor = c.holder;
                split.fanout = b.children.size();
                split.lineage = c.lineage;
                const std::size_t split_step = add(std::move(split));

                std::vector<Cursor> ends;
                for (std::size_t k = 0; k < b.children.size(); ++k)
                    ends.push_back(block(b.children[k], {{split_step, k}, c.holder, c.lineage + "." + std::to_string(k)}));

                std::string successor = "owner";
                TaskId task = kFillerTaskId;
                std::optional<TaskId> runs;
                if (!last) {
                    task = ch[i + 1].task;
                    successor = participant_for(task);
                    runs = task;
                    ++i; // the task after the join starts at the join
                }
                PlanStep join;
                join.kind = PlanStep::Kind::Join;
                join.actor = successor;
                join.runs_task = runs;
                join.lineage = c.lineage;
                for (const auto& e : ends)
                    join.inputs.push_back(handover(e, successor, task, std::nullopt).token);
                c = {{add(std::move(join)), 0}, successor, c.lineage};
                break;
            }
            }
        }
        return c;
    }

    const ProcessModel& model_;
    const Variant& variant_;
    Plan plan_;
};

} // namespace

Plan compile_plan(const ProcessModel& model, const Variant& variant)
{
    return PlanCompiler(model, variant).compile();
}

// Scenario execution -------------------------------------------------------------------------

double base_task_duration(TaskId task) { return 0.050 + static_cast<double>((task * 47u) % 131u) / 1000.0; }

double RunMetrics::phase_fraction(double PhaseTimes::*phase) const
{
    const double total = phases.total();
    return total > 0 ? phases.*phase / total : 0.0;
}

namespace {

constexpr std::uint32_t kEpoch = 1'600'000'000;

enum Stream : std::uint64_t {
    kChainStream = 0x636861696e,
    kTaskStream = 0x7461736b,
    kRootStream = 0x726f6f74,
    kDataStream = 0x64617461,
};

std::vector<double> draw_durations(const Plan& plan, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, kTaskStream));
    std::vector<double> out(plan.steps.size(), 0.0);
    for (std::size_t i = 0; i < plan.steps.size(); ++i)
        if (plan.steps[i].runs_task)
            out[i] = base_task_duration(*plan.steps[i].runs_task) * (1.0 + (rng.uniform01() - 0.5) * 0.01);
    return out;
}

double critical_path(const Plan& plan, const std::vector<double>& durations)
{
    std::map<TokenRef, double> ready;
    double finish = 0.0;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& s = plan.steps[i];
        double t = 0.0;
        for (const auto& in : s.inputs)
            t = std::max(t, ready.at(in));
        const std::size_t outs = s.kind == PlanStep::Kind::Split ? s.fanout : (s.kind == PlanStep::Kind::End ? 0 : 1);
        for (std::size_t k = 0; k < outs; ++k)
            ready[{i, k}] = t + durations[i];
        finish = std::max(finish, t);
    }
    return finish;
}

class ScenarioRun {
public:
    ScenarioRun(const ScenarioConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), model_(cfg.resolved_model()), seed_(seed),
          plan_(compile_plan(model_, Variant::parse(cfg.variant, model_))),
          durations_(draw_durations(plan_, seed)),
          chain_(loop_, ChainParams{cfg.block_mean, 1500, 1, derive_seed(seed, kChainStream)}),
          retry_(provider_), view_(retry_), transport_(loop_, cfg.costs.frame),
          root_(sha256(view(fmt::format("trust-root/{}", seed)))), engine_(cfg.fee, &chain_)
    {
        metrics_.seed = seed;
        metrics_.model_id = model_.model_id();
        metrics_.variant = cfg.variant;
        metrics_.verify = cfg.verify;
        metrics_.greedy = cfg.greedy;
        metrics_.fault_step = cfg.fault_step;
        metrics_.task_time = critical_path(plan_, durations_);
        for (const auto& s : plan_.steps)
            if (s.runs_task)
                ++metrics_.tasks_covered;
        if (cfg.fault_step && (*cfg.fault_step == 0 || *cfg.fault_step > plan_.handover_count()))
            throw std::invalid_argument(fmt::format("fault step {} outside 1..{}", *cfg.fault_step,
                                                    plan_.handover_count()));
    }

    ScenarioResult run()
    {
        ScenarioResult out;
        if (!cfg_.verify) {
            metrics_.duration = metrics_.task_time;
            metrics_.completed = true;
            out.metrics = std::move(metrics_);
            return out;
        }
        setup();
        execute_start();
        const double limit = 1e7;
        loop_.run_until([&] { return finished_ || loop_.now() > limit; });
        if (!finished_)
            metrics_.abort_reason = "simulation limit reached";

        for (const auto& [ref, slot] : slots_) {
            const bool consumed = std::any_of(dependents_[ref.step].begin(), dependents_[ref.step].end(), [&](std::size_t d) {
                return started_[d] && std::find(plan_.steps[d].inputs.begin(), plan_.steps[d].inputs.end(), ref) !=
                                          plan_.steps[d].inputs.end();
            });
            if (slot.token && !consumed)
                metrics_.stranded_value += slot.token->value;
        }
        out.trace = reconstruct_trace(chain_, start_id_);
        metrics_.conformant = is_conformant(check_conformance(model_, out.trace));
        collect_identities();
        metrics_.frames = transport_.frames_sent();
        if (cfg_.keep_dump)
            out.dump = write_dump(chain_);
        out.metrics = std::move(metrics_);
        return out;
    }

private:
    struct Slot {
        std::optional<ProcessToken> token;
        bool task_done = false;
        bool confirmed = false;
    };

    std::uint32_t clock() const { return kEpoch + static_cast<std::uint32_t>(loop_.now()); }

    const Participant& person(const std::string& name) const { return participants_.at(name); }

    void setup()
    {
        for (const auto& name : plan_.participants())
            participants_.emplace(name, root_.enroll(name, kEpoch - 86'400, kEpoch + 30 * 86'400));
        for (const auto& name : plan_.participants()) {
            responders_[name];
            guards_[name];
        }
        dependents_.resize(plan_.steps.size());
        for (std::size_t i = 0; i < plan_.steps.size(); ++i)
            for (const auto& in : plan_.steps[i].inputs)
                dependents_[in.step].push_back(i);
        started_.assign(plan_.steps.size(), false);
        waiting_.assign(plan_.steps.size(), false);
        std::size_t h = 0;
        handover_no_.assign(plan_.steps.size(), 0);
        for (std::size_t i = 0; i < plan_.steps.size(); ++i)
            if (plan_.steps[i].kind == PlanStep::Kind::Handover)
                handover_no_[i] = ++h;

        process_id_ = static_cast<std::uint16_t>(1 + seed_ % 65'535);
        const std::uint64_t need = engine_.policy().budget(estimate_tx_count(model_)) + engine_.policy().per_tx_fee;
        funding_.inputs.push_back({OutPoint::null(), need + 10'000, {}, static_cast<std::uint32_t>(seed_)});
        funding_.outputs.push_back(TxOutput::key_hash(need + 10'000, person("owner").tx_key.key_hash()));
        chain_.add_funding(funding_);
        chain_.start();
    }

    bool publish(const Transaction& tx)
    {
        auto res = chain_.broadcast(tx);
        if (!res.ok()) {
            spdlog::warn("broadcast rejected: {} {}", to_string(res.status), res.reason);
            return false;
        }
        const Hash256 id = tx.tx_id();
        ++metrics_.tx_count;
        metrics_.total_fees += static_cast<std::uint64_t>(tx.fee());
        chain_.await_confirmation(id, 1, [this, id](AwaitResult r) {
            if (r.evicted)
                return;
            metrics_.confirmation_waits.push_back(r.waited);
            confirmed_.insert(id);
            for (auto& [ref, slot] : slots_) {
                if (slot.token && slot.token->holding_output.tx_id == id && !slot.confirmed) {
                    slot.confirmed = true;
                    poke_dependents(ref.step);
                }
            }
        });
        return true;
    }

    void put_slot(TokenRef ref, ProcessToken token, std::optional<double> task)
    {
        Slot s;
        s.confirmed = confirmed_.count(token.holding_output.tx_id) > 0;
        s.token = std::move(token);
        s.task_done = !task;
        slots_[ref] = std::move(s);
        if (task) {
            loop_.schedule_after(*task, [this, ref] {
                slots_[ref].task_done = true;
                poke_dependents(ref.step);
            });
        }
    }

    void poke_dependents(std::size_t step)
    {
        for (std::size_t d : dependents_[step])
            poke(d);
    }

    void poke(std::size_t s)
    {
        if (started_[s] || halted_)
            return;
        const auto& step = plan_.steps[s];
        for (const auto& in : step.inputs) {
            auto it = slots_.find(in);
            if (it == slots_.end() || !it->second.task_done)
                return;
        }
        if (!cfg_.greedy) {
            const bool all = std::all_of(step.inputs.begin(), step.inputs.end(),
                                         [&](const TokenRef& in) { return slots_[in].confirmed; });
            if (!all) {
                if (!waiting_[s]) {
                    waiting_[s] = true;
                    open_wait();
                }
                return;
            }
        }
        if (waiting_[s]) {
            waiting_[s] = false;
            close_wait();
        }
        started_[s] = true;
        switch (step.kind) {
        case PlanStep::Kind::Handover: execute_handover(s); break;
        case PlanStep::Kind::Split:
        case PlanStep::Kind::Join:
        case PlanStep::Kind::End: execute_local(s); break;
        case PlanStep::Kind::Start: break;
        }
    }

    /// Work done by a single participant: charge logic and broadcast time, then build and publish.
    void execute_local(std::size_t s)
    {
        const double cost = cfg_.costs.logic + cfg_.costs.broadcast;
        metrics_.phases.logic += cfg_.costs.logic;
        metrics_.phases.broadcast += cfg_.costs.broadcast;
        loop_.schedule_after(cost, [this, s] {
            if (halted_ && plan_.steps[s].kind != PlanStep::Kind::End)
                return;
            const auto& step = plan_.steps[s];
            try {
                switch (step.kind) {
                case PlanStep::Kind::Split: {
                    auto r = engine_.build_split(*slots_[step.inputs[0]].token, step.fanout, clock());
                    if (!publish(r.tx))
                        return fail("split rejected");
                    for (std::size_t k = 0; k < r.tokens.size(); ++k)
                        put_slot({s, k}, r.tokens[k], std::nullopt);
                    poke_dependents(s);
                    break;
                }
                case PlanStep::Kind::Join: {
                    std::vector<ProcessToken> tokens;
                    for (const auto& in : step.inputs)
                        tokens.push_back(*slots_[in].token);
                    auto r = engine_.build_join(tokens, clock(), person(step.actor).tx_key);
                    if (!publish(r.tx))
                        return fail("join rejected");
                    put_slot({s, 0}, r.token, step.runs_task ? std::optional(durations_[s]) : std::nullopt);
                    poke_dependents(s);
                    break;
                }
                case PlanStep::Kind::End: {
                    Transaction end = engine_.build_end(*slots_[step.inputs[0]].token, clock(),
                                                        person("owner").tx_key.key_hash());
                    if (!publish(end))
                        return fail("end rejected");
                    await_end(end);
                    break;
                }
                default: break;
                }
            } catch (const std::exception& e) {
                fail(e.what());
            }
        });
    }

    void execute_start()
    {
        metrics_.phases.logic += cfg_.costs.logic;
        metrics_.phases.broadcast += cfg_.costs.broadcast;
        started_[0] = true;
        loop_.schedule_after(cfg_.costs.logic + cfg_.costs.broadcast, [this] {
            const auto& owner = person("owner");
            auto r = engine_.build_start({Spendable{{funding_.tx_id(), 0}, funding_.outputs[0].value, owner.tx_key}},
                                         process_id_, clock(), estimate_tx_count(model_), owner.tx_key);
            start_id_ = r.tx.tx_id();
            metrics_.start_budget = r.token.value;
            if (!publish(r.tx))
                return fail("start rejected");
            put_slot({0, 0}, r.token, std::nullopt);
            poke_dependents(0);
        });
    }

    void execute_handover(std::size_t s)
    {
        const auto& step = plan_.steps[s];
        const ProcessToken token = *slots_[step.inputs[0]].token;

        SenderSetup ss(token);
        ss.self = &person(step.actor);
        ss.trust_root = root_.public_key();
        ss.replay = &guards_[step.actor];
        ss.terms = {process_id_, step.task, clock() + 3600, sha256(view(fmt::format("reward/{}/{}", seed_, s)))};
        ss.process_data = Rng(derive_seed(seed_, kDataStream + s)).bytes(512);
        ss.owner_key_hash = person("owner").tx_key.key_hash();
        ss.engine = &engine_;
        ss.broadcast = [this](const Transaction& tx) {
            return publish(tx) ? BroadcastResult{} : BroadcastResult{BroadcastStatus::Invalid, "rejected"};
        };
        ss.epoch = kEpoch;
        ss.entropy = sha256(view(fmt::format("sender/{}/{}", seed_, s)));
        if (cfg_.fault_step && *cfg_.fault_step == handover_no_[s]) {
            const TaskId wrong = static_cast<TaskId>(step.task % kMaxTaskId + 1);
            const TxEngine* engine = &engine_;
            ss.tamper = [engine, token, wrong](HandoverTemplate& t) {
                t = engine->build_handover_template(token, wrong, t.terms.timestamp, t.terms.receiver_key_hash,
                                                    t.terms.data_hash);
            };
        }

        ReceiverSetup rs;
        rs.self = &person(step.receiver);
        rs.trust_root = root_.public_key();
        rs.replay = &guards_[step.receiver];
        rs.model = &model_;
        rs.chain = &view_;
        rs.epoch = kEpoch;
        rs.entropy = sha256(view(fmt::format("receiver/{}/{}", seed_, s)));

        auto sender = std::make_shared<SenderSession>(std::move(ss));
        auto receiver = std::make_shared<ReceiverSession>(std::move(rs));
        run_handover(loop_, transport_, cfg_.costs, sender, receiver, metrics_.phases,
                     [this, s, sender, receiver] { handover_done(s, *sender, *receiver); });
    }

    void handover_done(std::size_t s, const SenderSession& sender, const ReceiverSession& receiver)
    {
        const auto& step = plan_.steps[s];
        if (sender.state() == SessionState::Published) {
            const Transaction& tx = *sender.published();
            ++metrics_.handovers;
            responders_[step.actor].record(tx.tx_id(), *sender.peer_attestation());
            put_slot({s, 0},
                     ProcessToken{process_id_, {tx.tx_id(), 0}, tx.outputs[0].value, person(step.receiver).tx_key,
                                  sender.data_hash()},
                     step.runs_task ? std::optional(durations_[s]) : std::nullopt);
            poke_dependents(s);
            return;
        }
        metrics_.aborted = true;
        metrics_.rejected_check = receiver.rejected_check();
        metrics_.abort_reason = fmt::format("handover {} ({}): {}", handover_no_[s], to_string(sender.abort_reason()),
                                            sender.abort_detail());
        spdlog::debug("seed {}: {}", seed_, metrics_.abort_reason);
        halted_ = true;
        if (sender.end_tx()) {
            metrics_.detected = receiver.rejected_check() == 3 &&
                                sender.end_tx()->data_block()->marker() == marker::ExtraordinaryEnd;
            await_end(*sender.end_tx());
        } else {
            finish(false);
        }
    }

    void await_end(const Transaction& end)
    {
        if (end_id_)
            return; // the first end decides the run
        end_id_ = end.tx_id();
        std::uint64_t residual = 0;
        for (const auto& o : end.outputs)
            if (!o.is_data())
                residual += o.value;
        metrics_.end_residual = residual;
        open_wait();
        chain_.await_confirmation(*end_id_, 1, [this](AwaitResult r) {
            close_wait();
            finish(!r.evicted);
        });
    }

    // Confirmation time is the union of intervals in which some step waits only on depth.
    void open_wait()
    {
        if (open_waits_++ == 0)
            wait_opened_ = loop_.now();
    }

    void close_wait()
    {
        if (--open_waits_ == 0)
            metrics_.phases.confirmation += loop_.now() - wait_opened_;
    }

    void fail(const std::string& why)
    {
        metrics_.aborted = true;
        metrics_.abort_reason = why;
        halted_ = true;
        finish(false);
    }

    void finish(bool completed)
    {
        if (finished_)
            return;
        finished_ = true;
        metrics_.completed = completed;
        metrics_.duration = loop_.now();
    }

    void collect_identities()
    {
        std::map<std::string, const IdentityResponder*> registry;
        for (const auto& [name, r] : responders_)
            registry[name] = &r;
        OwnerMonitor monitor(person("owner"), root_.public_key(), chain_, start_id_, registry);
        auto report = monitor.collect(clock());
        metrics_.identities_learned = report.learned.size();
        metrics_.identity_gaps = report.gaps.size();
    }

    const ScenarioConfig& cfg_;
    const ProcessModel& model_;
    std::uint64_t seed_;
    Plan plan_;
    std::vector<double> durations_;
    RunMetrics metrics_;

    EventLoop loop_;
    ChainSim chain_;
    SimProvider provider_{chain_};
    RetryingProvider retry_;
    ProviderChainView view_;
    Transport transport_;
    TrustRoot root_;
    TxEngine engine_;

    std::map<std::string, Participant> participants_;
    std::map<std::string, IdentityResponder> responders_;
    std::map<std::string, ReplayGuard> guards_;

    std::uint16_t process_id_ = 0;
    Transaction funding_;
    Hash256 start_id_{};
    std::map<TokenRef, Slot> slots_;
    std::set<Hash256> confirmed_;
    std::vector<std::vector<std::size_t>> dependents_;
    std::vector<bool> started_;
    std::vector<bool> waiting_;
    std::size_t open_waits_ = 0;
    double wait_opened_ = 0.0;
    std::vector<std::size_t> handover_no_;
    std::optional<Hash256> end_id_;
    bool halted_ = false;
    bool finished_ = false;
};

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& config, std::uint64_t seed)
{
    return ScenarioRun(config, seed).run();
}

std::vector<RunMetrics> run_batch_serial(const ScenarioConfig& config)
{
    std::vector<RunMetrics> out;
    out.reserve(config.reps);
    for (std::size_t r = 0; r < config.reps; ++r)
        out.push_back(run_scenario(config, config.seed + r).metrics);
    return out;
}

std::vector<RunMetrics> run_batch(const ScenarioConfig& config)
{
    const ScenarioConfig cfg = [&] {
        ScenarioConfig c = config;
        c.keep_dump = false;
        return c;
    }();
    (void)cfg.resolved_model(); // initialise the shared models before the threads start
    std::vector<RunMetrics> out(cfg.reps);
    const auto n = static_cast<long>(cfg.reps);
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < n; ++r)
        out[static_cast<std::size_t>(r)] = run_scenario(cfg, cfg.seed + static_cast<std::uint64_t>(r)).metrics;
    return out;
}

// Summaries ---------------------------------------------------------------------------------

namespace {

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

Summary summarize(const std::vector<RunMetrics>& runs)
{
    Summary s;
    s.runs = runs.size();
    if (runs.empty())
        return s;
    std::vector<double> waits;
    PhaseTimes phases;
    std::size_t faults = 0, detected = 0, conformant = 0;
    double dur = 0, fees = 0, txs = 0;
    for (const auto& r : runs) {
        dur += r.duration;
        fees += static_cast<double>(r.total_fees);
        txs += static_cast<double>(r.tx_count);
        waits.insert(waits.end(), r.confirmation_waits.begin(), r.confirmation_waits.end());
        phases += r.phases;
        if (r.fault_step) {
            ++faults;
            detected += r.detected ? 1 : 0;
        }
        conformant += r.conformant ? 1 : 0;
    }
    const double n = static_cast<double>(runs.size());
    s.mean_duration = dur / n;
    if (runs.size() > 1) {
        double ss = 0;
        for (const auto& r : runs)
            ss += (r.duration - s.mean_duration) * (r.duration - s.mean_duration);
        s.stddev_duration = std::sqrt(ss / (n - 1));
    }
    s.median_confirmation = median(waits);
    s.mean_confirmation = waits.empty() ? 0.0 : std::accumulate(waits.begin(), waits.end(), 0.0) / static_cast<double>(waits.size());
    s.mean_fees = fees / n;
    s.mean_tx_count = txs / n;
    if (const double total = phases.total(); total > 0) {
        s.confirmation_share = phases.confirmation / total;
        s.logic_share = phases.logic / total;
        s.provider_share = phases.provider / total;
        s.broadcast_share = phases.broadcast / total;
    }
    s.detection_rate = faults ? static_cast<double>(detected) / static_cast<double>(faults) : 0.0;
    s.conformant_rate = static_cast<double>(conformant) / n;
    return s;
}

std::string metrics_csv_header()
{
    return "seed,model,variant,verify,greedy,fault_step,duration,task_time,tx_count,handovers,tasks_covered,"
           "total_fees,start_budget,end_residual,stranded_value,logic,provider,broadcast,confirmation,completed,aborted,detected,"
           "rejected_check,conformant,identities_learned,identity_gaps,frames,confirmation_waits";
}

std::string metrics_csv_row(const RunMetrics& m)
{
    std::string waits;
    for (std::size_t i = 0; i < m.confirmation_waits.size(); ++i)
        waits += (i ? ";" : "") + fmt::format("{:.6f}", m.confirmation_waits[i]);
    return fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{},{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{},{},{},{},{},{},{}",
                       m.seed, m.model_id, m.variant, int(m.verify), int(m.greedy),
                       m.fault_step ? std::to_string(*m.fault_step) : "none", m.duration, m.task_time, m.tx_count,
                       m.handovers, m.tasks_covered, m.total_fees, m.start_budget, m.end_residual, m.stranded_value, m.phases.logic,
                       m.phases.provider, m.phases.broadcast, m.phases.confirmation, int(m.completed),
                       int(m.aborted), int(m.detected), m.rejected_check, int(m.conformant), m.identities_learned,
                       m.identity_gaps, m.frames, waits);
}

std::vector<RunMetrics> parse_metrics_csv(std::string_view text)
{
    std::vector<RunMetrics> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("seed,", 0) == 0)
            continue;
        std::vector<std::string> f;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ','))
            f.push_back(cell);
        if (line.back() == ',')
            f.emplace_back();
        if (f.size() != 28)
            throw std::runtime_error(fmt::format("metrics line {}: expected 28 fields, got {}", lineno, f.size()));
        RunMetrics m;
        std::size_t i = 0;
        m.seed = std::stoull(f[i++]);
        m.model_id = std::stoi(f[i++]);
        m.variant = f[i++];
        m.verify = f[i++] == "1";
        m.greedy = f[i++] == "1";
        if (const auto& fs = f[i++]; fs != "none")
            m.fault_step = std::stoul(fs);
        m.duration = std::stod(f[i++]);
        m.task_time = std::stod(f[i++]);
        m.tx_count = std::stoul(f[i++]);
        m.handovers = std::stoul(f[i++]);
        m.tasks_covered = std::stoul(f[i++]);
        m.total_fees = std::stoull(f[i++]);
        m.start_budget = std::stoull(f[i++]);
        m.end_residual = std::stoull(f[i++]);
        m.stranded_value = std::stoull(f[i++]);
        m.phases.logic = std::stod(f[i++]);
        m.phases.provider = std::stod(f[i++]);
        m.phases.broadcast = std::stod(f[i++]);
        m.phases.confirmation = std::stod(f[i++]);
        m.completed = f[i++] == "1";
        m.aborted = f[i++] == "1";
        m.detected = f[i++] == "1";
        m.rejected_check = std::stoi(f[i++]);
        m.conformant = f[i++] == "1";
        m.identities_learned = std::stoul(f[i++]);
        m.identity_gaps = std::stoul(f[i++]);
        m.frames = std::stoul(f[i++]);
        std::istringstream ws(f[i]);
        std::string w;
        while (std::getline(ws, w, ';'))
            if (!w.empty())
                m.confirmation_waits.push_back(std::stod(w));
        out.push_back(std::move(m));
    }
    return out;
}

std::string summary_json(const Summary& s, const ScenarioConfig* config)
{
    nlohmann::json j{{"runs", s.runs},
                     {"mean_duration_s", s.mean_duration},
                     {"stddev_duration_s", s.stddev_duration},
                     {"median_confirmation_s", s.median_confirmation},
                     {"mean_confirmation_s", s.mean_confirmation},
                     {"mean_fees_sat", s.mean_fees},
                     {"mean_tx_count", s.mean_tx_count},
                     {"phase_share",
                      {{"logic", s.logic_share},
                       {"provider", s.provider_share},
                       {"broadcast", s.broadcast_share},
                       {"confirmation", s.confirmation_share}}},
                     {"detection_rate", s.detection_rate},
                     {"conformant_rate", s.conformant_rate}};
    if (config) {
        j["config"] = {{"model", config->resolved_model().model_id()},
                       {"variant", config->variant},
                       {"verify", config->verify},
                       {"greedy", config->greedy},
                       {"fault_step", config->fault_step ? nlohmann::json(*config->fault_step) : nlohmann::json("none")},
                       {"seed", config->seed},
                       {"block_mean_s", config->block_mean},
                       {"fee_sat", config->fee.per_tx_fee},
                       {"reps", config->reps}};
    }
    return j.dump(2);
}

std::string summary_table(const Summary& s)
{
    std::string out;
    out += fmt::format("{:<26}{}\n", "runs", s.runs);
    out += fmt::format("{:<26}{:.3f}\n", "mean duration [s]", s.mean_duration);
    out += fmt::format("{:<26}{:.3f}\n", "standard deviation [s]", s.stddev_duration);
    out += fmt::format("{:<26}{:.3f}\n", "median confirmation [s]", s.median_confirmation);
    out += fmt::format("{:<26}{:.1f}\n", "mean transactions", s.mean_tx_count);
    out += fmt::format("{:<26}{:.0f}\n", "mean fees [sat]", s.mean_fees);
    out += fmt::format("{:<26}logic {:.2f}%  provider {:.2f}%  broadcast {:.2f}%  confirmation {:.2f}%\n",
                       "phase share", 100 * s.logic_share, 100 * s.provider_share, 100 * s.broadcast_share,
                       100 * s.confirmation_share);
    out += fmt::format("{:<26}{:.1f}%\n", "detection rate", 100 * s.detection_rate);
    out += fmt::format("{:<26}{:.1f}%\n", "conformant", 100 * s.conformant_rate);
    return out;
}

} // namespace chorchain
