//! Deterministic built-in tools: an exact-arithmetic calculator, a
//! fixture-backed key-value lookup, and a fixed-payload tool for tests
//! and demos.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::{CallCtx, EndpointSchema, ToolAdapter, ToolError, ToolSchema};
use crate::protocol::AgentRequest;

/// Exact calculator over `+ - * /` and parentheses on decimal literals.
///
/// Evaluation is over rationals, so `(1/4)*8` is exactly `2`. Results
/// render as plain integers when possible, as exact decimals when the
/// denominator divides a power of ten, and as `p/q` otherwise.
pub struct CalculatorTool {
    schema: ToolSchema,
}

impl Default for CalculatorTool {
    fn default() -> Self {
        Self::new()
    }
}

impl CalculatorTool {
    pub fn new() -> Self {
        CalculatorTool {
            schema: ToolSchema {
                name: "calculator".to_string(),
                description: "evaluates arithmetic expressions exactly".to_string(),
                endpoints: vec![EndpointSchema {
                    id: "evaluate".to_string(),
                    required: vec!["query".to_string()],
                    optional: vec![],
                    outputs: vec![],
                }],
                single_flight: false,
            },
        }
    }

    pub fn evaluate(expression: &str) -> Result<String, ToolError> {
        let mut parser = Parser {
            chars: expression.chars().collect(),
            pos: 0,
        };
        let value = parser.expression()?;
        parser.skip_whitespace();
        if parser.pos != parser.chars.len() {
            return Err(ToolError::new(format!(
                "unexpected trailing input at position {}",
                parser.pos
            )));
        }
        Ok(render_rational(&value))
    }
}

impl ToolAdapter for CalculatorTool {
    fn schema(&self) -> &ToolSchema {
        &self.schema
    }

    fn call(&self, request: &AgentRequest, _ctx: &CallCtx) -> Result<String, ToolError> {
        let query = request
            .param("query")
            .ok_or_else(|| ToolError::new("missing `query` parameter"))?;
        Self::evaluate(query)
    }
}

/// Render a rational canonically: integer, exact decimal, or `p/q`.
pub fn render_rational(value: &BigRational) -> String {
    if value.is_integer() {
        return value.to_integer().to_string();
    }
    // Exact decimal exists iff the reduced denominator is 2^a * 5^b.
    let denom = value.denom().abs();
    let mut rest = denom.clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut tens = 0u32;
    while (&rest % &two).is_zero() {
        rest /= &two;
        tens += 1;
    }
    let mut fives = 0u32;
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return format!("{}/{}", value.numer(), value.denom());
    }
    let places = tens.max(fives);
    let scaled = value * BigRational::from_integer(BigInt::from(10).pow(places));
    let scaled = scaled.to_integer();
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = if digits.len() <= places as usize {
        format!("{}{}", "0".repeat(places as usize - digits.len() + 1), digits)
    } else {
        digits
    };
    let split = digits.len() - places as usize;
    let (int_part, frac_part) = digits.split_at(split);
    format!("{}{}.{}", if negative { "-" } else { "" }, int_part, frac_part)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_whitespace(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_whitespace();
        self.chars.get(self.pos).copied()
    }

    fn expression(&mut self) -> Result<BigRational, ToolError> {
        let mut value = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                '+' => {
                    self.pos += 1;
                    value += self.term()?;
                }
                '-' => {
                    self.pos += 1;
                    value -= self.term()?;
                }
                _ => break,
            }
        }
        Ok(value)
    }

    fn term(&mut self) -> Result<BigRational, ToolError> {
        let mut value = self.factor()?;
        while let Some(op) = self.peek() {
            match op {
                '*' => {
                    self.pos += 1;
                    value *= self.factor()?;
                }
                '/' => {
                    self.pos += 1;
                    let divisor = self.factor()?;
                    if divisor.is_zero() {
                        return Err(ToolError::new("division by zero"));
                    }
                    value /= divisor;
                }
                _ => break,
            }
        }
        Ok(value)
    }

    fn factor(&mut self) -> Result<BigRational, ToolError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some('(') => {
                self.pos += 1;
                let value = self.expression()?;
                if self.peek() != Some(')') {
                    return Err(ToolError::new("expected closing parenthesis"));
                }
                self.pos += 1;
                Ok(value)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) => Err(ToolError::new(format!(
                "unexpected character `{c}` at position {}",
                self.pos
            ))),
            None => Err(ToolError::new("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<BigRational, ToolError> {
        self.skip_whitespace();
        let start = self.pos;
        let mut seen_dot = false;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            if c.is_ascii_digit() {
                self.pos += 1;
            } else if c == '.' && !seen_dot {
                seen_dot = true;
                self.pos += 1;
            } else {
                break;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if text.is_empty() || text == "." {
            return Err(ToolError::new(format!("expected a number at position {start}")));
        }
        let rational = match text.split_once('.') {
            None => BigRational::from_integer(text.parse::<BigInt>().map_err(|e| {
                ToolError::new(format!("bad integer literal `{text}`: {e}"))
            })?),
            Some((int_part, frac_part)) => {
                let int_part: BigInt = if int_part.is_empty() {
                    BigInt::zero()
                } else {
                    int_part
                        .parse()
                        .map_err(|e| ToolError::new(format!("bad literal `{text}`: {e}")))?
                };
                let frac: BigInt = if frac_part.is_empty() {
                    BigInt::zero()
                } else {
                    frac_part
                        .parse()
                        .map_err(|e| ToolError::new(format!("bad literal `{text}`: {e}")))?
                };
                let scale = BigInt::from(10).pow(frac_part.len() as u32);
                BigRational::from_integer(int_part)
                    + BigRational::new(frac, scale)
            }
        };
        Ok(rational)
    }
}

/// Fixture-backed key-value tool standing in for search and API backends.
///
/// The lookup key is the value of the single required parameter, or the
/// values of all required parameters joined with `|` in schema order for
/// multi-parameter tools. A missing key yields an empty payload, which
/// drives the incomplete-information paths downstream.
pub struct KvTool {
    schema: ToolSchema,
    data: BTreeMap<String, String>,
}

impl KvTool {
    /// Single-parameter convention: one `lookup` endpoint taking `query`.
    pub fn new(name: impl Into<String>, data: BTreeMap<String, String>) -> Self {
        KvTool {
            schema: ToolSchema {
                name: name.into(),
                description: "fixture-backed key-value lookup".to_string(),
                endpoints: vec![EndpointSchema {
                    id: "lookup".to_string(),
                    required: vec!["query".to_string()],
                    optional: vec![],
                    outputs: vec![],
                }],
                single_flight: false,
            },
            data,
        }
    }

    pub fn with_schema(schema: ToolSchema, data: BTreeMap<String, String>) -> Self {
        KvTool { schema, data }
    }

    /// Load from a fixture file. Two shapes are accepted: a bare JSON map
    /// (tool named after the file stem, single `query` parameter), or an
    /// object with explicit `tool`, `endpoints`, and `data` fields whose
    /// data values may be strings or JSON objects (serialized as payloads).
    pub fn from_fixture_file(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ToolError::new(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ToolError::new(format!("bad fixture {}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "fixture".to_string());
        Self::from_fixture_json(&stem, value)
            .map_err(|e| ToolError::new(format!("bad fixture {}: {}", path.display(), e.message)))
    }

    pub fn from_fixture_json(
        default_name: &str,
        value: serde_json::Value,
    ) -> Result<Self, ToolError> {
        let serde_json::Value::Object(map) = value else {
            return Err(ToolError::new("fixture must be a JSON object"));
        };
        if map.contains_key("tool") || map.contains_key("endpoints") {
            #[derive(serde::Deserialize)]
            struct Extended {
                tool: String,
                #[serde(default)]
                description: String,
                endpoints: Vec<EndpointSchema>,
                #[serde(default)]
                single_flight: bool,
                data: BTreeMap<String, serde_json::Value>,
            }
            let extended: Extended =
                serde_json::from_value(serde_json::Value::Object(map))
                    .map_err(|e| ToolError::new(e.to_string()))?;
            let schema = ToolSchema {
                name: extended.tool,
                description: extended.description,
                endpoints: extended.endpoints,
                single_flight: extended.single_flight,
            };
            let data = extended
                .data
                .into_iter()
                .map(|(k, v)| (k, payload_text(v)))
                .collect();
            Ok(KvTool { schema, data })
        } else {
            let data = map
                .into_iter()
                .map(|(k, v)| (k, payload_text(v)))
                .collect();
            Ok(KvTool::new(default_name, data))
        }
    }

    pub fn data(&self) -> &BTreeMap<String, String> {
        &self.data
    }
}

fn payload_text(value: serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

impl ToolAdapter for KvTool {
    fn schema(&self) -> &ToolSchema {
        &self.schema
    }

    fn call(&self, request: &AgentRequest, _ctx: &CallCtx) -> Result<String, ToolError> {
        let endpoint = self
            .schema
            .endpoint(&request.endpoint)
            .ok_or_else(|| ToolError::new(format!("unknown endpoint `{}`", request.endpoint)))?;
        let mut key_parts = Vec::new();
        for required in &endpoint.required {
            let value = request.param(required).ok_or_else(|| {
                ToolError::new(format!("missing required parameter `{required}`"))
            })?;
            key_parts.push(value);
        }
        let key = key_parts.join("|");
        Ok(self.data.get(&key).cloned().unwrap_or_default())
    }
}

/// Always returns a fixed payload, optionally after a delay. Useful for
/// wiring demos and timing tests.
pub struct StaticTool {
    schema: ToolSchema,
    payload: String,
    delay: Duration,
}

impl StaticTool {
    pub fn new(name: impl Into<String>, payload: impl Into<String>) -> Self {
        StaticTool {
            schema: ToolSchema {
                name: name.into(),
                description: "fixed-payload tool".to_string(),
                endpoints: vec![EndpointSchema {
                    id: "call".to_string(),
                    required: vec![],
                    optional: vec!["query".to_string()],
                    outputs: vec![],
                }],
                single_flight: false,
            },
            payload: payload.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_outputs(mut self, outputs: &[&str]) -> Self {
        self.schema.endpoints[0].outputs = outputs.iter().map(|s| s.to_string()).collect();
        self
    }
}

impl ToolAdapter for StaticTool {
    fn schema(&self) -> &ToolSchema {
        &self.schema
    }

    fn call(&self, _request: &AgentRequest, _ctx: &CallCtx) -> Result<String, ToolError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        Ok(self.payload.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calculator_basic_examples() {
        assert_eq!(CalculatorTool::evaluate("2+3").unwrap(), "5");
        assert_eq!(CalculatorTool::evaluate("(1/4)*8").unwrap(), "2");
        assert_eq!(CalculatorTool::evaluate("1/2").unwrap(), "0.5");
        assert_eq!(CalculatorTool::evaluate("1/3").unwrap(), "1/3");
        assert_eq!(CalculatorTool::evaluate("-1.5 * 4").unwrap(), "-6");
        assert_eq!(CalculatorTool::evaluate("2 + 3 * 4").unwrap(), "14");
        assert_eq!(CalculatorTool::evaluate("(2 + 3) * 4").unwrap(), "20");
        assert_eq!(CalculatorTool::evaluate("0.1 + 0.2").unwrap(), "0.3");
    }

    #[test]
    fn calculator_rejects_bad_input() {
        assert!(CalculatorTool::evaluate("2 +").is_err());
        assert!(CalculatorTool::evaluate("1/0").is_err());
        assert!(CalculatorTool::evaluate("hello").is_err());
        assert!(CalculatorTool::evaluate("(2").is_err());
        assert!(CalculatorTool::evaluate("2 3").is_err());
    }

    /// Independent oracle: shunting-yard evaluation over the same rationals.
    mod shunting_yard {
        use num_bigint::BigInt;
        use num_rational::BigRational;
        use num_traits::Zero;

        #[derive(Debug, Clone, Copy, PartialEq)]
        enum Op {
            Add,
            Sub,
            Mul,
            Div,
            Neg,
            Open,
        }

        fn precedence(op: Op) -> u8 {
            match op {
                Op::Add | Op::Sub => 1,
                Op::Mul | Op::Div => 2,
                Op::Neg => 3,
                Op::Open => 0,
            }
        }

        fn apply(op: Op, values: &mut Vec<BigRational>) -> Option<()> {
            if op == Op::Neg {
                let v = values.pop()?;
                values.push(-v);
                return Some(());
            }
            let right = values.pop()?;
            let left = values.pop()?;
            let result = match op {
                Op::Add => left + right,
                Op::Sub => left - right,
                Op::Mul => left * right,
                Op::Div => {
                    if right.is_zero() {
                        return None;
                    }
                    left / right
                }
                _ => unreachable!(),
            };
            values.push(result);
            Some(())
        }

        pub fn evaluate(expr: &str) -> Option<BigRational> {
            let chars: Vec<char> = expr.chars().filter(|c| !c.is_whitespace()).collect();
            let mut values: Vec<BigRational> = Vec::new();
            let mut ops: Vec<Op> = Vec::new();
            let mut i = 0;
            let mut prev_was_value = false;
            while i < chars.len() {
                let c = chars[i];
                if c.is_ascii_digit() || c == '.' {
                    let start = i;
                    let mut dot = false;
                    while i < chars.len()
                        && (chars[i].is_ascii_digit() || (chars[i] == '.' && !dot))
                    {
                        if chars[i] == '.' {
                            dot = true;
                        }
                        i += 1;
                    }
                    let text: String = chars[start..i].iter().collect();
                    let (int_text, frac_text) =
                        text.split_once('.').unwrap_or((text.as_str(), ""));
                    let scale = BigInt::from(10).pow(frac_text.len() as u32);
                    let int: BigInt = if int_text.is_empty() {
                        BigInt::zero()
                    } else {
                        int_text.parse().ok()?
                    };
                    let frac: BigInt = if frac_text.is_empty() {
                        BigInt::zero()
                    } else {
                        frac_text.parse().ok()?
                    };
                    values.push(
                        BigRational::from_integer(int) + BigRational::new(frac, scale),
                    );
                    prev_was_value = true;
                    continue;
                }
                let op = match c {
                    '+' => Op::Add,
                    '-' if prev_was_value => Op::Sub,
                    '-' => Op::Neg,
                    '*' => Op::Mul,
                    '/' => Op::Div,
                    '(' => {
                        ops.push(Op::Open);
                        prev_was_value = false;
                        i += 1;
                        continue;
                    }
                    ')' => {
                        loop {
                            let top = ops.pop()?;
                            if top == Op::Open {
                                break;
                            }
                            apply(top, &mut values)?;
                        }
                        prev_was_value = true;
                        i += 1;
                        continue;
                    }
                    _ => return None,
                };
                while let Some(&top) = ops.last() {
                    let tighter = if op == Op::Neg {
                        precedence(top) > precedence(op)
                    } else {
                        precedence(top) >= precedence(op)
                    };
                    if top != Op::Open && tighter {
                        apply(ops.pop()?, &mut values)?;
                    } else {
                        break;
                    }
                }
                ops.push(op);
                prev_was_value = false;
                i += 1;
            }
            while let Some(op) = ops.pop() {
                if op == Op::Open {
                    return None;
                }
                apply(op, &mut values)?;
            }
            if values.len() == 1 {
                values.pop()
            } else {
                None
            }
        }
    }

    #[test]
    fn calculator_matches_shunting_yard_oracle_on_random_expressions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(27);

        fn gen_expr(rng: &mut rand_chacha::ChaCha8Rng, depth: u32) -> String {
            if depth == 0 || rng.gen_bool(0.35) {
                if rng.gen_bool(0.3) {
                    format!("{}.{}", rng.gen_range(0..100), rng.gen_range(0..100))
                } else {
                    format!("{}", rng.gen_range(0..1000))
                }
            } else {
                let op = ["+", "-", "*", "/"][rng.gen_range(0..4)];
                let left = gen_expr(rng, depth - 1);
                let right = gen_expr(rng, depth - 1);
                if rng.gen_bool(0.5) {
                    format!("({left} {op} {right})")
                } else {
                    format!("{left} {op} {right}")
                }
            }
        }

        let mut checked = 0;
        while checked < 200 {
            let expr = gen_expr(&mut rng, 4);
            let oracle = shunting_yard::evaluate(&expr);
            let ours = CalculatorTool::evaluate(&expr);
            match (oracle, ours) {
                (Some(expected), Ok(actual)) => {
                    assert_eq!(render_rational(&expected), actual, "expr: {expr}");
                    checked += 1;
                }
                // Division by zero: both sides must refuse.
                (None, Err(_)) => {
                    checked += 1;
                }
                (oracle, ours) => panic!("disagreement on `{expr}`: {oracle:?} vs {ours:?}"),
            }
        }
    }

    #[test]
    fn kv_lookup_hits_and_misses() {
        let data = BTreeMap::from([(
            "Santorini, Greece".to_string(),
            "36.39, 25.46".to_string(),
        )]);
        let tool = KvTool::new("geocode", data);
        let ctx = CallCtx {
            node: "a".to_string(),
            attempt: 1,
            timeout: Duration::from_secs(1),
        };
        let hit = tool
            .call(
                &AgentRequest::new("FUNCTION", "lookup").with_param("query", "Santorini, Greece"),
                &ctx,
            )
            .unwrap();
        assert_eq!(hit, "36.39, 25.46");
        let miss = tool
            .call(
                &AgentRequest::new("FUNCTION", "lookup").with_param("query", "Atlantis"),
                &ctx,
            )
            .unwrap();
        assert_eq!(miss, "");
    }

    #[test]
    fn kv_fixture_file_round_trips_every_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spots.json");
        let fixture = serde_json::json!({
            "Santorini, Greece": "36.39, 25.46",
            "Prague, Czech Republic": "50.08, 14.44",
        });
        std::fs::write(&path, serde_json::to_string_pretty(&fixture).unwrap()).unwrap();
        let tool = KvTool::from_fixture_file(&path).unwrap();
        assert_eq!(tool.schema().name, "spots");
        let ctx = CallCtx {
            node: "a".to_string(),
            attempt: 1,
            timeout: Duration::from_secs(1),
        };
        for (key, value) in fixture.as_object().unwrap() {
            let payload = tool
                .call(
                    &AgentRequest::new("FUNCTION", "lookup").with_param("query", key.as_str()),
                    &ctx,
                )
                .unwrap();
            assert_eq!(&payload, value.as_str().unwrap());
        }
    }

    #[test]
    fn kv_extended_fixture_with_multi_param_key() {
        let fixture = serde_json::json!({
            "tool": "open_meteo",
            "endpoints": [{
                "id": "forecast",
                "required": ["latitude", "longitude"],
                "optional": ["daily_parameters"],
                "outputs": []
            }],
            "data": { "36.39|25.46": "average 24C, sunny" }
        });
        let tool = KvTool::from_fixture_json("ignored", fixture).unwrap();
        assert_eq!(tool.schema().name, "open_meteo");
        let ctx = CallCtx {
            node: "a".to_string(),
            attempt: 1,
            timeout: Duration::from_secs(1),
        };
        let payload = tool
            .call(
                &AgentRequest::new("FUNCTION", "forecast")
                    .with_param("latitude", "36.39")
                    .with_param("longitude", "25.46"),
                &ctx,
            )
            .unwrap();
        assert_eq!(payload, "average 24C, sunny");
    }
}
