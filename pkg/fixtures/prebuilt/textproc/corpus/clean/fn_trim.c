__int64 __fastcall fn_trim(char *a1)
{
  int v2; // [rsp+4h]

  v2 = 0;
  while ( a1[v2] )
  {
    if ( (signed char)a1[v2] < 0 )
      break;
    v2 = v2 + 1;
  }
  a1[v2] = 0;
  return (unsigned int)v2;
}
