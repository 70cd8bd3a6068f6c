use serde::{Deserialize, Serialize};

/// Inclusive ranges for each vehicle rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub points: [usize; 2],
    pub width: [f64; 2],
    pub length: [f64; 2],
    pub area: [f64; 2],
    pub width_length_ratio: [f64; 2],
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            points: [8, 5000],
            width: [0.01, 2.6],
            length: [1.0, 6.0],
            area: [0.02, 14.0],
            width_length_ratio: [0.005, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleOutcome {
    pub points: bool,
    pub width: bool,
    pub length: bool,
    pub area: bool,
    pub ratio: bool,
}

impl RuleOutcome {
    pub fn all(&self) -> bool {
        self.points && self.width && self.length && self.area && self.ratio
    }
}

fn within(v: f64, r: [f64; 2]) -> bool {
    v >= r[0] && v <= r[1]
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [
            ("width", self.width),
            ("length", self.length),
            ("area", self.area),
            ("width_length_ratio", self.width_length_ratio),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return Err(format!("classifier.{name} must satisfy 0 < min <= max"));
            }
        }
        if self.points[0] == 0 || self.points[0] > self.points[1] {
            return Err("classifier.points must satisfy 0 < min <= max".into());
        }
        if self.width[1] > self.length[1] {
            return Err("classifier.width max must not exceed length max".into());
        }
        Ok(())
    }

    pub fn rules(&self, length: f64, width: f64, n_points: usize) -> RuleOutcome {
        RuleOutcome {
            points: n_points >= self.points[0] && n_points <= self.points[1],
            width: within(width, self.width),
            length: within(length, self.length),
            area: within(length * width, self.area),
            ratio: length > 0.0 && within(width / length, self.width_length_ratio),
        }
    }
}

/// True iff every rule accepts the candidate.
pub fn rule_classify(config: &ClassifierConfig, length: f64, width: f64, n_points: usize) -> bool {
    config.rules(length, width, n_points).all()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn car_accepted() {
        let c = ClassifierConfig::default();
        assert!(rule_classify(&c, 4.5, 1.9, 300));
    }

    #[test]
    fn bus_wall_rejected_on_length_only() {
        let c = ClassifierConfig::default();
        let r = c.rules(12.0, 3.0, 300);
        assert!(!r.length && !r.all());
        assert!(!rule_classify(&c, 12.0, 3.0, 300));
    }

    #[test]
    fn too_few_points() {
        let c = ClassifierConfig::default();
        let r = c.rules(4.5, 1.9, 3);
        assert!(!r.points && r.width && r.length && r.area && r.ratio);
        assert!(!rule_classify(&c, 4.5, 1.9, 3));
    }

    #[test]
    fn single_rule_violations() {
        let c = ClassifierConfig::default();
        let base = c.rules(4.5, 1.9, 300);
        assert!(base.all());
        assert!(!c.rules(2.7, 2.65, 300).width);
        assert!(!c.rules(0.5, 0.45, 300).length);
        // Length and width pass individually, area fails.
        let tight = ClassifierConfig {
            area: [0.5, 5.0],
            ..c.clone()
        };
        let r = tight.rules(4.5, 1.9, 300);
        assert!(r.width && r.length && r.ratio && !r.area);
        let r = c.rules(5.9, 0.025, 300);
        assert!(r.width && r.length && r.area && !r.ratio);
    }
}
