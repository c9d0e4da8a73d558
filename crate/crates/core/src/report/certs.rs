use std::borrow::Borrow;
use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::handshake::HandshakeRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertCluster {
    pub fingerprint: String,
    /// Leaf subject CN of the first host seen with this certificate.
    pub common_name: Option<String>,
    pub hosts: u64,
    /// Percentage of certificate-presenting hosts covered by this and all
    /// larger clusters.
    pub cumulative_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CertClusterReport {
    pub hosts_with_cert: u64,
    /// Largest first; equal sizes in fingerprint order.
    pub clusters: Vec<CertCluster>,
}

impl CertClusterReport {
    /// Percentage of hosts covered by the `n` largest clusters.
    pub fn top_coverage(&self, n: usize) -> f64 {
        match n.min(self.clusters.len()) {
            0 => 0.0,
            k => self.clusters[k - 1].cumulative_pct,
        }
    }

    /// CSV `rank,fingerprint,common_name,hosts,cumulative_pct`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "fingerprint", "common_name", "hosts", "cumulative_pct"])?;
        for (i, c) in self.clusters.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                c.fingerprint.clone(),
                c.common_name.clone().unwrap_or_default(),
                c.hosts.to_string(),
                format!("{:.2}", c.cumulative_pct),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Groups hosts by leaf certificate fingerprint. Records without a
/// certificate are ignored.
pub fn cluster_certificates<I>(records: I) -> CertClusterReport
where
    I: IntoIterator,
    I::Item: Borrow<HandshakeRecord>,
{
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut clusters: Vec<CertCluster> = Vec::new();
    let mut total = 0u64;
    for r in records {
        let r = r.borrow();
        let Some(fp) = r.cert_fingerprints.first() else { continue };
        total += 1;
        match index.get(fp.as_str()) {
            Some(&i) => clusters[i].hosts += 1,
            None => {
                index.insert(fp.clone(), clusters.len());
                clusters.push(CertCluster {
                    fingerprint: fp.clone(),
                    common_name: r.cert_cn.clone(),
                    hosts: 1,
                    cumulative_pct: 0.0,
                });
            }
        }
    }
    clusters.sort_by(|a, b| b.hosts.cmp(&a.hosts).then_with(|| a.fingerprint.cmp(&b.fingerprint)));
    let mut running = 0u64;
    for c in &mut clusters {
        running += c.hosts;
        c.cumulative_pct = 100.0 * running as f64 / total as f64;
    }
    CertClusterReport { hosts_with_cert: total, clusters }
}
