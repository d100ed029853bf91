//! Deterministic synthetic corpora: a grouped paraphrase dataset matching
//! the grouped-CSV schema, and a pair dataset matching the question-pair
//! TSV schema. Groups are rendered from per-category template families so
//! texts in one group are lexical paraphrases of each other.

use std::io::Write;
use std::path::Path;

use crate::data::{GroupRecord, GroupedData, PairRecord};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const CATEGORY_NAMES: [&str; 13] = [
    "Business",
    "Politics",
    "Celebrity",
    "Entertainment",
    "Finance",
    "Health & Wellness",
    "Motivation",
    "Sports",
    "News",
    "Promotions",
    "Gaming",
    "Travel",
    "Technology",
];

/// Four paraphrase variants per family, four families per category.
/// Slots: {e1} and {e2} draw from the entity pool, {num} is a two-digit
/// number.
static FAMILIES: [[[&str; 4]; 4]; 13] = [
    // Business
    [
        [
            "{e1} stock rises {num} percent after strong earnings report",
            "shares of {e1} climb {num} percent on strong earnings",
            "{e1} shares gain {num} percent after earnings beat",
            "strong earnings lift {e1} stock {num} percent",
        ],
        [
            "{e1} announces merger with {e2} in landmark business deal",
            "{e1} and {e2} agree to merger in major business deal",
            "merger deal brings {e1} and {e2} together",
            "{e1} seals merger agreement with {e2}",
        ],
        [
            "{e1} opens new headquarters to expand its business",
            "{e1} expands business with new headquarters",
            "new headquarters marks business expansion for {e1}",
            "{e1} unveils new headquarters amid expansion",
        ],
        [
            "{e1} reports quarterly revenue of {num} million dollars",
            "quarterly revenue at {e1} reaches {num} million dollars",
            "{e1} posts {num} million dollars in quarterly revenue",
            "revenue of {num} million dollars reported by {e1}",
        ],
    ],
    // Politics
    [
        [
            "{e1} wins election with {num} percent of the vote",
            "{e1} takes election victory with {num} percent of votes",
            "election victory for {e1} at {num} percent of the vote",
            "{e1} claims {num} percent of the vote to win election",
        ],
        [
            "senator {e1} proposes new policy bill on taxes",
            "new tax policy bill proposed by senator {e1}",
            "senator {e1} introduces tax policy bill",
            "tax bill introduced by senator {e1} in parliament",
        ],
        [
            "{e1} debates {e2} ahead of national election",
            "national election debate pits {e1} against {e2}",
            "{e1} faces {e2} in national election debate",
            "debate between {e1} and {e2} before the election",
        ],
        [
            "government of {e1} signs treaty with {e2}",
            "{e1} government signs treaty alongside {e2}",
            "treaty signed between {e1} and {e2} governments",
            "{e1} and {e2} formalize government treaty",
        ],
    ],
    // Celebrity
    [
        [
            "{e1} spotted with {e2} at red carpet premiere",
            "red carpet premiere brings {e1} and {e2} together",
            "{e1} joins {e2} on the red carpet",
            "{e1} and {e2} walk red carpet at premiere",
        ],
        [
            "{e1} announces engagement to {e2}",
            "engagement announced between {e1} and {e2}",
            "{e1} reveals engagement with {e2}",
            "{e1} and {e2} celebrate their engagement",
        ],
        [
            "{e1} turns {num} with star studded birthday party",
            "{e1} celebrates {num} birthday with stars",
            "star studded party marks {e1} turning {num}",
            "birthday bash for {e1} at {num}",
        ],
        [
            "{e1} signs {num} million dollar endorsement deal",
            "endorsement deal worth {num} million signed by {e1}",
            "{e1} lands {num} million endorsement",
            "{num} million endorsement deal goes to {e1}",
        ],
    ],
    // Entertainment
    [
        [
            "{e1} stars in new movie premiering this weekend",
            "new movie starring {e1} premieres this weekend",
            "{e1} leads cast of movie premiering weekend",
            "weekend premiere for new movie with {e1}",
        ],
        [
            "{e1} releases new album topping the charts",
            "new album from {e1} tops music charts",
            "{e1} album hits top of the charts",
            "chart topping album released by {e1}",
        ],
        [
            "{e1} series renewed for season {num}",
            "season {num} confirmed for {e1} series",
            "{e1} show returns for season {num}",
            "series {e1} gets season {num} renewal",
        ],
        [
            "{e1} concert tour sells out in {num} minutes",
            "tickets for {e1} tour sell out in {num} minutes",
            "{e1} sells out concert tour within {num} minutes",
            "concert tour by {e1} gone in {num} minutes",
        ],
    ],
    // Finance
    [
        [
            "{e1} bank raises interest rates by {num} basis points",
            "interest rates up {num} basis points at {e1} bank",
            "{e1} bank lifts rates {num} basis points",
            "rate hike of {num} basis points from {e1} bank",
        ],
        [
            "{e1} fund posts {num} percent annual return for investors",
            "investors in {e1} fund see {num} percent return",
            "{e1} fund delivers {num} percent return",
            "annual return of {num} percent for {e1} fund investors",
        ],
        [
            "{e1} currency falls {num} percent against the dollar",
            "the {e1} currency drops {num} percent versus dollar",
            "{e1} slides {num} percent against the dollar",
            "dollar gains as {e1} falls {num} percent",
        ],
        [
            "{e1} files for ipo seeking {num} billion valuation",
            "ipo filing values {e1} at {num} billion",
            "{e1} seeks {num} billion valuation in ipo",
            "{num} billion ipo valuation sought by {e1}",
        ],
    ],
    // Health & Wellness
    [
        [
            "study finds {e1} diet improves heart health",
            "heart health improved by {e1} diet study shows",
            "{e1} diet linked to better heart health",
            "researchers link {e1} diet to heart health",
        ],
        [
            "daily yoga with {e1} reduces stress levels",
            "{e1} yoga routine cuts stress",
            "stress levels drop with {e1} yoga practice",
            "practicing {e1} yoga lowers stress",
        ],
        [
            "{e1} clinic offers free wellness checkups this month",
            "free wellness checkups at {e1} clinic",
            "{e1} clinic runs free checkup program",
            "wellness checkup program opens at {e1} clinic",
        ],
        [
            "drinking {num} glasses of water boosts energy says {e1}",
            "{e1} says {num} glasses of water boost energy",
            "{num} glasses of water daily boost energy per {e1}",
            "energy benefits from {num} glasses of water says {e1}",
        ],
    ],
    // Motivation
    [
        [
            "{e1} shares morning habits that build discipline",
            "morning habits for discipline shared by {e1}",
            "{e1} reveals morning discipline habits",
            "discipline starts with morning habits says {e1}",
        ],
        [
            "never give up says {e1} after {num} failed attempts",
            "{e1} succeeded after {num} failed attempts never giving up",
            "after {num} failures {e1} never gave up",
            "{num} attempts later {e1} proves never give up",
        ],
        [
            "{e1} inspires millions with commencement speech",
            "commencement speech by {e1} inspires millions",
            "millions inspired by {e1} graduation speech",
            "{e1} delivers inspiring commencement speech",
        ],
        [
            "small daily goals lead to big success says {e1}",
            "{e1} credits success to small daily goals",
            "big success built from small goals says {e1}",
            "daily goals drive big success according to {e1}",
        ],
    ],
    // Sports
    [
        [
            "{e1} defeats {e2} by {num} points in final",
            "{e1} tops {e2} by {num} in championship final",
            "championship final sees {e1} beat {e2} by {num}",
            "{e1} wins final over {e2} by {num} points",
        ],
        [
            "{e1} breaks world record in the {num} meter sprint",
            "world record falls to {e1} in {num} meter sprint",
            "{e1} sets {num} meter sprint world record",
            "new {num} meter world record for {e1}",
        ],
        [
            "{e1} signs with {e2} in record transfer",
            "record transfer takes {e1} to {e2}",
            "{e1} completes transfer to {e2}",
            "{e2} lands {e1} in record transfer deal",
        ],
        [
            "{e1} scores winning goal in derby against {e2}",
            "winning goal from {e1} sinks {e2} in derby",
            "{e1} nets derby winner against {e2}",
            "derby winner scored by {e1} against {e2}",
        ],
    ],
    // News
    [
        [
            "storm {e1} hits coast leaving {num} thousand without power",
            "{num} thousand lose power as storm {e1} strikes coast",
            "storm {e1} knocks out power to {num} thousand",
            "coastal storm {e1} cuts power for {num} thousand",
        ],
        [
            "city of {e1} opens new bridge after {num} years",
            "new bridge opens in {e1} after {num} years",
            "{e1} bridge finally opens following {num} years",
            "after {num} years {e1} city bridge opens",
        ],
        [
            "firefighters contain blaze near {e1} district",
            "blaze near {e1} district contained by firefighters",
            "{e1} district fire brought under control",
            "fire crews contain {e1} district blaze",
        ],
        [
            "{e1} announces recall of {num} thousand vehicles",
            "recall covers {num} thousand {e1} vehicles",
            "{e1} recalls {num} thousand cars",
            "{num} thousand vehicles recalled by {e1}",
        ],
    ],
    // Promotions
    [
        [
            "{e1} store offers {num} percent off this weekend only",
            "weekend sale at {e1} takes {num} percent off",
            "{num} percent discount all weekend at {e1}",
            "{e1} weekend deal cuts prices {num} percent",
        ],
        [
            "buy one get one free on all {e1} products",
            "all {e1} products now buy one get one free",
            "{e1} launches buy one get one free offer",
            "free product with every {e1} purchase",
        ],
        [
            "{e1} members earn double points until friday",
            "double points for {e1} members this week until friday",
            "{e1} loyalty members get double points",
            "earn double {e1} points before friday",
        ],
        [
            "flash sale {e1} coupon saves {num} dollars",
            "save {num} dollars with {e1} flash coupon",
            "{e1} flash sale coupon worth {num} dollars",
            "{num} dollar savings in {e1} flash sale",
        ],
    ],
    // Gaming
    [
        [
            "{e1} studio releases patch {num} with new maps",
            "patch {num} from {e1} adds new maps",
            "{e1} game update {num} brings new maps",
            "new maps arrive in {e1} patch {num}",
        ],
        [
            "{e1} wins esports tournament beating {e2}",
            "esports title goes to {e1} over {e2}",
            "{e1} defeats {e2} in esports grand final",
            "tournament crown for {e1} after beating {e2}",
        ],
        [
            "{e1} console sells {num} million units worldwide",
            "{num} million {e1} consoles sold worldwide",
            "worldwide sales of {e1} console hit {num} million",
            "{e1} console passes {num} million units",
        ],
        [
            "speedrunner {e1} clears game in {num} minutes",
            "{e1} sets speedrun record of {num} minutes",
            "game beaten in {num} minutes by {e1}",
            "{num} minute speedrun achieved by {e1}",
        ],
    ],
    // Travel
    [
        [
            "{e1} named top destination for budget travelers",
            "budget travelers rank {e1} top destination",
            "{e1} tops list of budget travel destinations",
            "top budget destination this year is {e1}",
        ],
        [
            "airline {e1} adds direct flights to {e2}",
            "{e1} airline opens direct route to {e2}",
            "direct {e1} flights now reach {e2}",
            "new direct flights connect {e1} and {e2}",
        ],
        [
            "{e1} hotel voted best resort {num} years running",
            "best resort award goes to {e1} hotel for {num} years",
            "{e1} resort wins best hotel {num} years straight",
            "{num} straight years of best resort for {e1}",
        ],
        [
            "visa free travel to {e1} starts next month",
            "{e1} opens visa free entry next month",
            "travelers get visa free access to {e1}",
            "next month {e1} drops visa requirement",
        ],
    ],
    // Technology
    [
        [
            "{e1} unveils new smartphone with {num} hour battery",
            "new {e1} smartphone boasts {num} hour battery",
            "{e1} phone launches with {num} hour battery life",
            "{num} hour battery headlines new {e1} smartphone",
        ],
        [
            "{e1} releases open source library for developers",
            "developers get open source library from {e1}",
            "{e1} open sources new developer library",
            "new open source tool released by {e1}",
        ],
        [
            "{e1} data center cuts energy use by {num} percent",
            "energy use down {num} percent at {e1} data center",
            "{e1} slashes data center energy {num} percent",
            "{num} percent energy savings at {e1} data center",
        ],
        [
            "{e1} partners with {e2} on artificial intelligence research",
            "artificial intelligence research unites {e1} and {e2}",
            "{e1} and {e2} team up on ai research",
            "ai research partnership formed by {e1} and {e2}",
        ],
    ],
];

const ENTITY_PREFIXES: [&str; 40] = [
    "bran", "kel", "mor", "tas", "vel", "nor", "hal", "ser", "dov", "lin", "mar", "quin", "fen",
    "gar", "rho", "sil", "ter", "uma", "vik", "wes", "yar", "zan", "cor", "del", "eri", "fio",
    "gus", "hec", "ila", "jor", "kyr", "lor", "mira", "neva", "osric", "pell", "rika", "sable",
    "tena", "ulric",
];

const ENTITY_SUFFIXES: [&str; 20] = [
    "a", "o", "is", "en", "ar", "el", "ia", "us", "or", "an", "ix", "ey", "ona", "ith", "ios",
    "era", "und", "all", "ese", "ium",
];

/// The shared pool of 800 single-token entity names.
pub fn entity_pool() -> Vec<String> {
    let mut pool = Vec::with_capacity(ENTITY_PREFIXES.len() * ENTITY_SUFFIXES.len());
    for p in ENTITY_PREFIXES {
        for s in ENTITY_SUFFIXES {
            pool.push(format!("{p}{s}"));
        }
    }
    pool
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub categories: usize,
    pub groups: usize,
    pub min_texts: usize,
    pub max_texts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            categories: 13,
            groups: 201,
            min_texts: 2,
            max_texts: 4,
            seed: 42,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.categories == 0 || self.categories > CATEGORY_NAMES.len() {
            return Err(Error::Data(format!(
                "categories must be in 1..={}, got {}",
                CATEGORY_NAMES.len(),
                self.categories
            )));
        }
        if self.groups == 0 {
            return Err(Error::Data("groups must be positive".into()));
        }
        if self.min_texts < 2 || self.max_texts < self.min_texts {
            return Err(Error::Data(format!(
                "need 2 <= min_texts <= max_texts, got {}..{}",
                self.min_texts, self.max_texts
            )));
        }
        Ok(())
    }
}

fn render(template: &str, e1: &str, e2: &str, num: usize) -> String {
    template
        .replace("{e1}", e1)
        .replace("{e2}", e2)
        .replace("{num}", &num.to_string())
}

struct TopicSampler {
    pool: Vec<String>,
}

impl TopicSampler {
    fn new() -> TopicSampler {
        TopicSampler {
            pool: entity_pool(),
        }
    }

    /// Draw (family variants, e1, e2, num) for a category.
    fn topic(&self, cat: usize, rng: &mut SeededRng) -> (&'static [&'static str; 4], String, String, usize) {
        let family = &FAMILIES[cat][rng.index(4)];
        let e1 = self.pool[rng.index(self.pool.len())].clone();
        let mut e2 = self.pool[rng.index(self.pool.len())].clone();
        while e2 == e1 {
            e2 = self.pool[rng.index(self.pool.len())].clone();
        }
        let num = 10 + rng.index(90);
        (family, e1, e2, num)
    }
}

/// Generate the grouped dataset: `groups` paraphrase groups spread
/// round-robin over the first `categories` category names, each with
/// `min_texts..=max_texts` distinct variants of one rendered topic.
pub fn gen_grouped_records(cfg: &SynthConfig) -> Result<GroupedData> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let sampler = TopicSampler::new();
    let mut records = Vec::new();
    for g in 0..cfg.groups {
        let cat = g % cfg.categories;
        let (family, e1, e2, num) = sampler.topic(cat, &mut rng);
        let span = cfg.max_texts.min(family.len()) - cfg.min_texts + 1;
        let k = cfg.min_texts + rng.index(span);
        let mut variant_order: Vec<usize> = (0..family.len()).collect();
        rng.shuffle(&mut variant_order);
        for &v in variant_order.iter().take(k) {
            records.push(GroupRecord {
                text: render(family[v], &e1, &e2, num),
                category: CATEGORY_NAMES[cat].to_string(),
                group_id: g as u64,
            });
        }
    }
    Ok(GroupedData {
        records,
        categories: CATEGORY_NAMES[..cfg.categories]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    })
}

/// Write the grouped dataset in the `text,category,group_id` CSV schema.
pub fn write_grouped_csv(data: &GroupedData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("cannot create {}: {}", path.display(), e)))?;
    w.write_record(["text", "category", "group_id"])
        .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    for r in &data.records {
        w.write_record([r.text.as_str(), r.category.as_str(), &r.group_id.to_string()])
            .map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Generate `n_dup` paraphrase pairs and `n_nondup` cross-topic pairs.
pub fn gen_pair_records(n_dup: usize, n_nondup: usize, seed: u64) -> Vec<PairRecord> {
    let mut rng = SeededRng::new(seed);
    let sampler = TopicSampler::new();
    let mut out = Vec::with_capacity(n_dup + n_nondup);
    for _ in 0..n_dup {
        let cat = rng.index(CATEGORY_NAMES.len());
        let (family, e1, e2, num) = sampler.topic(cat, &mut rng);
        let a = rng.index(family.len());
        let mut b = rng.index(family.len());
        while b == a {
            b = rng.index(family.len());
        }
        out.push(PairRecord {
            q1: render(family[a], &e1, &e2, num),
            q2: render(family[b], &e1, &e2, num),
            is_duplicate: true,
        });
    }
    for _ in 0..n_nondup {
        loop {
            let cat1 = rng.index(CATEGORY_NAMES.len());
            let cat2 = rng.index(CATEGORY_NAMES.len());
            let (f1, a1, b1, n1) = sampler.topic(cat1, &mut rng);
            let (f2, a2, b2, n2) = sampler.topic(cat2, &mut rng);
            let q1 = render(f1[rng.index(f1.len())], &a1, &b1, n1);
            let q2 = render(f2[rng.index(f2.len())], &a2, &b2, n2);
            if q1 != q2 {
                out.push(PairRecord {
                    q1,
                    q2,
                    is_duplicate: false,
                });
                break;
            }
        }
    }
    out
}

/// Write pairs in the question-pair TSV schema with sequential ids.
pub fn write_pairs_tsv(pairs: &[PairRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "id\tqid1\tqid2\tquestion1\tquestion2\tis_duplicate")?;
    for (i, p) in pairs.iter().enumerate() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            i,
            2 * i + 1,
            2 * i + 2,
            p.q1,
            p.q2,
            if p.is_duplicate { 1 } else { 0 }
        )?;
    }
    w.flush()?;
    Ok(())
}
