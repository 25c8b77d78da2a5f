use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::Serialize;

use crate::analytic::Ttl;
use crate::error::{Error, Result};
use crate::sim::config::{frozen_occupancy, Horizon, Placement, SimConfig, WalkMode};
use crate::sim::report::RawStats;

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival,
    Decrement { tier: usize, slot: usize },
    Hop { walk: usize },
    Timeout { walk: usize },
    Boundary { index: usize },
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Request {
    content: usize,
    measured: bool,
    /// In-network delay accrued so far.
    delay: f64,
}

#[derive(Debug)]
struct Walk {
    id: u64,
    request: Request,
    tier: usize,
    start: f64,
    current: usize,
    /// Next cache, chosen when the hop is scheduled.
    target: usize,
    /// Unvisited caches (no-revisit) or remaining visiting order
    /// (preselected, consumed from the back).
    pool: Vec<usize>,
}

#[derive(Serialize)]
struct TraceRecord {
    t: f64,
    event: &'static str,
    tier: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cache: Option<usize>,
    content: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    walk: Option<u64>,
}

pub(crate) struct Engine<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    n_contents: usize,
    /// `counters[tier][cache * C + content]`
    counters: Vec<Vec<u32>>,
    stored_since: Vec<Vec<f64>>,
    net_insertions: Vec<Vec<i64>>,
    thresholds: Vec<Vec<u32>>,
    decrement: Vec<Vec<Option<Exp<f64>>>>,
    hop: Vec<Exp<f64>>,
    ttls: Vec<Vec<Ttl>>,
    frozen_pi: Vec<Vec<f64>>,
    arrival: Option<(Exp<f64>, WeightedIndex<f64>)>,
    walks: Vec<Option<Walk>>,
    free_walks: Vec<usize>,
    active_walks: usize,
    next_walk_id: u64,
    frozen_seen: Vec<u8>,
    frozen_touched: Vec<usize>,
    batch_len: f64,
    measuring: bool,
    window_end: f64,
    arrivals_open: bool,
    counted_requests: u64,
    batch_stored: Vec<Vec<f64>>,
    batch_ins: Vec<Vec<u64>>,
    batch_ev: Vec<Vec<u64>>,
    stats: RawStats,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a SimConfig, stream: u64, trace: Option<&'a mut dyn Write>) -> Result<Self> {
        cfg.validate()?;
        let topo = &cfg.topology;
        let c = topo.n_contents();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let exp = |rate: f64| Exp::new(rate).map_err(|e| Error::config(e.to_string()));
        let total = cfg.total_rate();
        let arrival = if total > 0.0 {
            let w = WeightedIndex::new(&topo.exogenous_rates)
                .map_err(|e| Error::config(e.to_string()))?;
            Some((exp(total)?, w))
        } else {
            None
        };
        let mut decrement = Vec::new();
        for tier in &topo.tiers {
            decrement.push(
                tier.contents
                    .iter()
                    .map(|s| Exp::new(s.mu()).ok())
                    .collect::<Vec<_>>(),
            );
        }
        let n_caches: Vec<usize> = topo.tiers.iter().map(|t| t.domain.n_caches).collect();
        let max_n = n_caches.iter().copied().max().unwrap_or(1);
        let dynamic = cfg.placement == Placement::Dynamic;
        Ok(Engine {
            cfg,
            rng,
            heap: BinaryHeap::new(),
            seq: 0,
            n_contents: c,
            counters: n_caches.iter().map(|n| vec![0; n * c]).collect(),
            stored_since: n_caches.iter().map(|n| vec![0.0; n * c]).collect(),
            net_insertions: n_caches.iter().map(|n| vec![0; n * c]).collect(),
            thresholds: topo
                .tiers
                .iter()
                .map(|t| t.contents.iter().map(|s| s.k_threshold).collect())
                .collect(),
            decrement,
            hop: topo
                .tiers
                .iter()
                .map(|t| exp(t.domain.hop_rate))
                .collect::<Result<_>>()?,
            ttls: topo
                .tiers
                .iter()
                .map(|t| (0..c).map(|k| t.ttl_for(k)).collect())
                .collect(),
            frozen_pi: (0..topo.n_tiers())
                .map(|i| (0..c).map(|k| frozen_occupancy(topo, i, k)).collect())
                .collect(),
            arrival,
            walks: Vec::new(),
            free_walks: Vec::new(),
            active_walks: 0,
            next_walk_id: 0,
            frozen_seen: vec![0; max_n],
            frozen_touched: Vec::new(),
            batch_len: cfg.window() / cfg.batches as f64,
            measuring: false,
            window_end: f64::INFINITY,
            arrivals_open: true,
            counted_requests: 0,
            batch_stored: vec![vec![0.0; c]; n_caches.len()],
            batch_ins: vec![vec![0; c]; n_caches.len()],
            batch_ev: vec![vec![0; c]; n_caches.len()],
            stats: RawStats::new(n_caches, c, dynamic),
            trace,
        })
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn emit(
        &mut self,
        t: f64,
        event: &'static str,
        tier: usize,
        cache: Option<usize>,
        content: usize,
        walk: Option<u64>,
    ) -> Result<()> {
        if let Some(w) = self.trace.as_mut() {
            let rec = TraceRecord {
                t,
                event,
                tier,
                cache,
                content,
                walk,
            };
            serde_json::to_writer(&mut **w, &rec).map_err(|e| Error::Io(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<RawStats> {
        if let Some((exp, _)) = &self.arrival {
            let t = exp.sample(&mut self.rng);
            self.schedule(t, Event::Arrival);
        }
        self.schedule(self.cfg.warmup, Event::Boundary { index: 0 });
        let horizon = match self.cfg.horizon {
            Horizon::Time(t) => t,
            Horizon::Requests(_) => f64::INFINITY,
        };
        while let Some(Scheduled { time, event, .. }) = self.heap.pop() {
            if time > horizon {
                break;
            }
            match event {
                Event::Arrival => self.on_arrival(time)?,
                Event::Decrement { tier, slot } => self.on_decrement(tier, slot, time)?,
                Event::Hop { walk } => self.on_hop(walk, time)?,
                Event::Timeout { walk } => self.on_timeout(walk, time)?,
                Event::Boundary { index } => self.on_boundary(index, time),
            }
            if !self.arrivals_open && self.active_walks == 0 {
                break;
            }
        }
        if self.window_end.is_infinite() {
            self.window_end = horizon;
            self.flush(horizon);
        }
        self.stats.duration = self.window_end - self.cfg.warmup;
        self.record_imbalance();
        Ok(self.stats)
    }

    fn record_imbalance(&mut self) {
        let c = self.n_contents;
        for (tier, net) in self.net_insertions.iter().enumerate() {
            for (slot, v) in net.iter().enumerate() {
                let cell = &mut self.stats.cells[tier][slot % c];
                cell.flow_imbalance = cell.flow_imbalance.max(v.unsigned_abs());
            }
        }
    }

    fn in_window(&self, now: f64) -> bool {
        self.measuring && now < self.window_end
    }

    /// Moves stored time up to `now` into the batch accumulators.
    fn flush(&mut self, now: f64) {
        let c = self.n_contents;
        for tier in 0..self.counters.len() {
            for slot in 0..self.counters[tier].len() {
                if self.counters[tier][slot] > self.thresholds[tier][slot % c] {
                    if self.measuring {
                        let dt = now - self.stored_since[tier][slot];
                        self.batch_stored[tier][slot % c] += dt;
                        self.stats.cells[tier][slot % c].stored_time += dt;
                    }
                    self.stored_since[tier][slot] = now;
                }
            }
        }
    }

    fn on_boundary(&mut self, index: usize, now: f64) {
        if now >= self.window_end {
            return;
        }
        self.flush(now);
        if index > 0 {
            for tier in 0..self.batch_stored.len() {
                let scale = self.stats.n_caches[tier] as f64 * self.batch_len;
                for k in 0..self.n_contents {
                    let cell = &mut self.stats.cells[tier][k];
                    cell.batch_occupancy.push(self.batch_stored[tier][k] / scale);
                    cell.batch_insertions.push(self.batch_ins[tier][k] as f64 / scale);
                    cell.batch_evictions.push(self.batch_ev[tier][k] as f64 / scale);
                }
            }
        }
        for tier in 0..self.batch_stored.len() {
            self.batch_stored[tier].fill(0.0);
            self.batch_ins[tier].fill(0);
            self.batch_ev[tier].fill(0);
        }
        self.measuring = true;
        let last = match self.cfg.horizon {
            Horizon::Time(_) => index + 1 >= self.cfg.batches + 1,
            Horizon::Requests(_) => false,
        };
        if !last {
            let next = match self.cfg.horizon {
                Horizon::Time(t) if index + 1 == self.cfg.batches => t,
                _ => self.cfg.warmup + (index + 1) as f64 * self.batch_len,
            };
            self.schedule(next, Event::Boundary { index: index + 1 });
        }
    }

    fn on_arrival(&mut self, now: f64) -> Result<()> {
        let (exp, weights) = self.arrival.as_ref().expect("arrivals scheduled without rate");
        let next = now + exp.sample(&mut self.rng);
        let content = weights.sample(&mut self.rng);
        let measured = now >= self.cfg.warmup;
        if measured {
            self.counted_requests += 1;
            self.stats.contents[content].requests += 1;
        }
        let stop = matches!(self.cfg.horizon, Horizon::Requests(n) if self.counted_requests >= n);
        if stop {
            self.arrivals_open = false;
        } else {
            self.schedule(next, Event::Arrival);
        }
        let user_tier = self.stats.n_caches.len() - 1;
        let cache = self.rng.random_range(0..self.stats.n_caches[user_tier]);
        self.emit(now, "request", user_tier, Some(cache), content, None)?;
        let req = Request {
            content,
            measured,
            delay: 0.0,
        };
        self.enter_tier(req, user_tier, cache, now)?;
        if stop {
            self.flush(now);
            self.window_end = now;
        }
        Ok(())
    }

    fn record_search(&mut self, req: &Request, tier: usize, found_at: f64) {
        if !req.measured {
            return;
        }
        let cell = &mut self.stats.cells[tier][req.content];
        cell.entries += 1;
        if found_at == 0.0 {
            cell.entry_hits += 1;
        } else if found_at.is_infinite() {
            cell.not_found += 1;
        }
        cell.found_times.push(found_at);
    }

    fn finish(&mut self, req: Request, custodian: bool) {
        if !req.measured {
            return;
        }
        let s = &mut self.stats.contents[req.content];
        s.completed += 1;
        s.sum_w += req.delay;
        s.sum_w2 += req.delay * req.delay;
        if custodian {
            s.custodian_arrivals += 1;
            s.sum_r += 1.0;
            s.sum_wr += req.delay;
        }
    }

    fn enter_tier(&mut self, req: Request, tier: usize, cache: usize, now: f64) -> Result<()> {
        let c = req.content;
        let hit = match self.cfg.placement {
            Placement::Dynamic => {
                let slot = cache * self.n_contents + c;
                let hit = self.counters[tier][slot] > self.thresholds[tier][c];
                self.increment(tier, slot, now)?;
                hit
            }
            Placement::Frozen => {
                let pi = self.frozen_pi[tier][c];
                self.rng.random_bool(pi)
            }
        };
        if hit {
            self.emit(now, "hit", tier, Some(cache), c, None)?;
            self.record_search(&req, tier, 0.0);
            self.finish(req, false);
            return Ok(());
        }
        let walks = self.ttls[tier][c] != Ttl::Finite(0.0);
        // a miss that starts a walk carries the walk's id
        let walk_id = walks.then_some(self.next_walk_id);
        self.emit(now, "miss", tier, Some(cache), c, walk_id)?;
        if !walks {
            self.record_search(&req, tier, f64::INFINITY);
            return self.forward(req, tier, now);
        }
        match self.cfg.placement {
            Placement::Dynamic => self.start_walk(req, tier, cache, now),
            Placement::Frozen => self.frozen_walk(req, tier, cache, now),
        }
    }

    /// Passes a request one tier towards the custodian.
    fn forward(&mut self, req: Request, tier: usize, now: f64) -> Result<()> {
        if tier > 0 {
            let next = tier - 1;
            let cache = self.rng.random_range(0..self.stats.n_caches[next]);
            self.enter_tier(req, next, cache, now)
        } else {
            self.emit(now, "custodian", 0, None, req.content, None)?;
            self.finish(req, true);
            Ok(())
        }
    }

    fn increment(&mut self, tier: usize, slot: usize, now: f64) -> Result<()> {
        let c = slot % self.n_contents;
        let n = self.counters[tier][slot];
        if n == 0 {
            if let Some(exp) = self.decrement[tier][c] {
                let t = now + exp.sample(&mut self.rng);
                self.schedule(t, Event::Decrement { tier, slot });
            }
        }
        self.counters[tier][slot] = n + 1;
        if n == self.thresholds[tier][c] {
            self.stored_since[tier][slot] = now;
            self.net_insertions[tier][slot] += 1;
            if self.in_window(now) {
                self.stats.cells[tier][c].insertions += 1;
                self.batch_ins[tier][c] += 1;
            }
            self.emit(now, "insert", tier, Some(slot / self.n_contents), c, None)?;
        }
        Ok(())
    }

    fn on_decrement(&mut self, tier: usize, slot: usize, now: f64) -> Result<()> {
        let c = slot % self.n_contents;
        let n = self.counters[tier][slot];
        debug_assert!(n > 0);
        self.counters[tier][slot] = n - 1;
        if n == self.thresholds[tier][c] + 1 {
            self.net_insertions[tier][slot] -= 1;
            if self.measuring {
                let end = now.min(self.window_end);
                let dt = (end - self.stored_since[tier][slot]).max(0.0);
                self.batch_stored[tier][c] += dt;
                self.stats.cells[tier][c].stored_time += dt;
            }
            if self.in_window(now) {
                self.stats.cells[tier][c].evictions += 1;
                self.batch_ev[tier][c] += 1;
            }
            self.emit(now, "evict", tier, Some(slot / self.n_contents), c, None)?;
        }
        if n > 1 {
            let exp = self.decrement[tier][c].expect("positive counter without decrement rate");
            let t = now + exp.sample(&mut self.rng);
            self.schedule(t, Event::Decrement { tier, slot });
        }
        Ok(())
    }

    /// Next cache for a walk currently at `current`, or `None` when no
    /// candidate is left.
    fn pick_next(
        rng: &mut ChaCha8Rng,
        mode: WalkMode,
        n: usize,
        current: usize,
        pool: &mut Vec<usize>,
    ) -> Option<usize> {
        match mode {
            WalkMode::Stateless => {
                if n < 2 {
                    return None;
                }
                let r = rng.random_range(0..n - 1);
                Some(if r >= current { r + 1 } else { r })
            }
            WalkMode::StatefulNoRevisit => {
                if pool.is_empty() {
                    return None;
                }
                let i = rng.random_range(0..pool.len());
                Some(pool.swap_remove(i))
            }
            WalkMode::StatefulPreselected => pool.pop(),
        }
    }

    fn initial_pool(&mut self, n: usize, entry: usize) -> Vec<usize> {
        match self.cfg.walk {
            WalkMode::Stateless => Vec::new(),
            WalkMode::StatefulNoRevisit => (0..n).filter(|&k| k != entry).collect(),
            WalkMode::StatefulPreselected => {
                let mut order: Vec<usize> = (0..n).filter(|&k| k != entry).collect();
                order.shuffle(&mut self.rng);
                order
            }
        }
    }

    fn start_walk(&mut self, req: Request, tier: usize, entry: usize, now: f64) -> Result<()> {
        let pool = self.initial_pool(self.stats.n_caches[tier], entry);
        let walk = Walk {
            id: self.next_walk_id,
            request: req,
            tier,
            start: now,
            current: entry,
            target: entry,
            pool,
        };
        self.next_walk_id += 1;
        let slot = match self.free_walks.pop() {
            Some(s) => {
                self.walks[s] = Some(walk);
                s
            }
            None => {
                self.walks.push(Some(walk));
                self.walks.len() - 1
            }
        };
        self.active_walks += 1;
        self.schedule_hop(slot, now)
    }

    fn release(&mut self, slot: usize) -> Walk {
        self.active_walks -= 1;
        self.free_walks.push(slot);
        self.walks[slot].take().expect("walk slot in use")
    }

    fn schedule_hop(&mut self, slot: usize, now: f64) -> Result<()> {
        let mode = self.cfg.walk;
        let walk = self.walks[slot].as_mut().expect("walk slot in use");
        let tier = walk.tier;
        let ttl = self.ttls[tier][walk.request.content];
        let n = self.stats.n_caches[tier];
        let next = Self::pick_next(&mut self.rng, mode, n, walk.current, &mut walk.pool);
        let limit = walk.start + ttl.as_secs();
        match next {
            Some(target) => {
                walk.target = target;
                let t = now + self.hop[tier].sample(&mut self.rng);
                if t > limit {
                    self.schedule(limit, Event::Timeout { walk: slot });
                } else {
                    self.schedule(t, Event::Hop { walk: slot });
                }
            }
            None if limit.is_finite() => self.schedule(limit, Event::Timeout { walk: slot }),
            None => {
                // every cache visited and no timeout: give up now
                let walk = self.release(slot);
                let mut req = walk.request;
                req.delay += now - walk.start;
                self.emit(now, "exhausted", tier, Some(walk.current), req.content, Some(walk.id))?;
                self.record_search(&req, tier, f64::INFINITY);
                self.forward(req, tier, now)?;
            }
        }
        Ok(())
    }

    fn on_hop(&mut self, slot: usize, now: f64) -> Result<()> {
        let c_total = self.n_contents;
        let walk = self.walks[slot].as_mut().expect("walk slot in use");
        walk.current = walk.target;
        let (tier, cache, c, id) = (walk.tier, walk.current, walk.request.content, walk.id);
        self.emit(now, "hop", tier, Some(cache), c, Some(id))?;
        let found = self.counters[tier][cache * c_total + c] > self.thresholds[tier][c];
        if found {
            let walk = self.release(slot);
            let mut req = walk.request;
            let elapsed = now - walk.start;
            req.delay += elapsed;
            self.emit(now, "found", tier, Some(cache), c, Some(id))?;
            self.record_search(&req, tier, elapsed);
            self.finish(req, false);
            Ok(())
        } else {
            self.schedule_hop(slot, now)
        }
    }

    fn on_timeout(&mut self, slot: usize, now: f64) -> Result<()> {
        let walk = self.release(slot);
        let mut req = walk.request;
        req.delay += now - walk.start;
        self.emit(now, "timeout", walk.tier, Some(walk.current), req.content, Some(walk.id))?;
        self.record_search(&req, walk.tier, f64::INFINITY);
        self.forward(req, walk.tier, now)
    }

    /// Resolves a whole walk at once against independent presence draws.
    fn frozen_walk(&mut self, req: Request, tier: usize, entry: usize, now: f64) -> Result<()> {
        let c = req.content;
        let pi = self.frozen_pi[tier][c];
        let n = self.stats.n_caches[tier];
        let limit = self.ttls[tier][c].as_secs();
        let id = self.next_walk_id;
        self.next_walk_id += 1;
        let mut pool = self.initial_pool(n, entry);
        for k in self.frozen_touched.drain(..) {
            self.frozen_seen[k] = 0;
        }
        // 1 = holds the content, 2 = does not
        self.frozen_seen[entry] = 2;
        self.frozen_touched.push(entry);
        let mut current = entry;
        let mut elapsed = 0.0;
        let mut req = req;
        let found = loop {
            let Some(target) = Self::pick_next(&mut self.rng, self.cfg.walk, n, current, &mut pool)
            else {
                if limit.is_finite() {
                    elapsed = limit;
                }
                break false;
            };
            let v = self.hop[tier].sample(&mut self.rng);
            if elapsed + v > limit {
                elapsed = limit;
                break false;
            }
            elapsed += v;
            current = target;
            self.emit(now + elapsed, "hop", tier, Some(current), c, Some(id))?;
            let state = match self.frozen_seen[current] {
                0 => {
                    let s = if self.rng.random_bool(pi) { 1 } else { 2 };
                    self.frozen_seen[current] = s;
                    self.frozen_touched.push(current);
                    s
                }
                s => s,
            };
            if state == 1 {
                break true;
            }
        };
        req.delay += elapsed;
        let t = now + elapsed;
        if found {
            self.emit(t, "found", tier, Some(current), c, Some(id))?;
            self.record_search(&req, tier, elapsed);
            self.finish(req, false);
            Ok(())
        } else {
            self.emit(t, "timeout", tier, Some(current), c, Some(id))?;
            self.record_search(&req, tier, f64::INFINITY);
            self.forward(req, tier, t)
        }
    }
}
