use std::fs;

use redflag::ingest::{assemble_contracts, load_table, ColumnMapping, DecimalSeparator, IngestError, Stage};
use redflag_core::{AwardCriterion, ProcedureType};

fn mapping() -> ColumnMapping {
    let mut m = ColumnMapping::identity(&[Stage::Call, Stage::Award]);
    m.date_format = "%d/%m/%Y".into();
    m.decimal = DecimalSeparator::Comma;
    m.delimiter = ';';
    m.codes.non_open = vec!["NEGOZIATA".into(), "AFFIDAMENTO DIRETTO".into()];
    m.codes.open = vec!["APERTA".into()];
    m.codes.meat = vec!["OEPV".into()];
    let call = m.columns.get_mut(&Stage::Call).unwrap();
    call.insert("authority_id".into(), "cf_amministrazione".into());
    call.insert("procedure_type".into(), "tipo_scelta".into());
    m
}

#[test]
fn renamed_columns_comma_decimals_and_codes() {
    let dir = tempfile::tempdir().unwrap();
    let call = dir.path().join("call.csv");
    fs::write(
        &call,
        "cig;cf_amministrazione;publication_date;submission_deadline;tipo_scelta\n\
         A1;X;01/02/2017;20/02/2017;negoziata\n\
         A2;X;05/03/2017;;APERTA\n\
         A3;Y;;;RISTRETTA\n",
    )
    .unwrap();
    let award = dir.path().join("award.jsonl");
    fs::write(
        &award,
        "{\"cig\":\"A1\",\"award_id\":\"w1\",\"award_date\":\"01/04/2017\",\"award_value\":\"1234,5\",\"award_criterion\":\"OEPV\",\"bids_received\":3,\"bids_eligible\":null,\"bids_excluded\":\"2\"}\n\
         {\"cig\":\"A1\",\"award_id\":\"w0\",\"award_date\":\"02/04/2017\",\"award_value\":\"9\",\"award_criterion\":\"x\",\"bids_received\":1,\"bids_eligible\":1,\"bids_excluded\":0}\n",
    )
    .unwrap();
    let m = mapping();
    m.validate().unwrap();
    let c = load_table(&call, &m, Stage::Call).unwrap();
    let a = load_table(&award, &m, Stage::Award).unwrap();
    let (recs, rep) = assemble_contracts(&c, &a, &[], &m);
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0].procedure_type, Some(ProcedureType::NonOpen));
    assert_eq!(recs[1].procedure_type, Some(ProcedureType::Open));
    assert_eq!(recs[2].procedure_type, None);
    assert_eq!(rep.unknown_procedure_codes, 1);
    // earliest award wins
    assert_eq!(recs[0].award_id.as_deref(), Some("w1"));
    assert_eq!(recs[0].award_value, Some(1234.5));
    assert_eq!(recs[0].award_criterion, Some(AwardCriterion::Meat));
    assert_eq!(recs[0].bids_eligible, None);
    assert_eq!(recs[0].bids_excluded, Some(2));
    assert_eq!(rep.multiple_awards, 1);
    assert_eq!(recs[0].has_variant, None);
}

#[test]
fn missing_column_and_bad_values_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let call = dir.path().join("call.csv");
    fs::write(&call, "cig;publication_date\nA;01/01/2017\n").unwrap();
    let err = load_table(&call, &mapping(), Stage::Call).unwrap_err();
    assert!(matches!(err, IngestError::MissingColumn { .. }), "{err}");

    let award = dir.path().join("award.csv");
    fs::write(
        &award,
        "cig;award_id;award_date;award_value;award_criterion;bids_received;bids_eligible;bids_excluded\n\
         A;1;01/01/2017;-5;;;;\n",
    )
    .unwrap();
    let err = load_table(&award, &mapping(), Stage::Award).unwrap_err();
    assert!(matches!(err, IngestError::Parse { row: 1, .. }), "{err}");
}

#[test]
fn undeclared_optional_field_is_a_mapping_error() {
    let mut m = mapping();
    m.columns.get_mut(&Stage::Award).unwrap().remove("bids_excluded");
    assert!(matches!(m.validate(), Err(IngestError::Undeclared { field: "bids_excluded", .. })));
    m.absent.push("bids_excluded".into());
    m.validate().unwrap();
}
